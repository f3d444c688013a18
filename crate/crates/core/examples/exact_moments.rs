// Exact first and second moments, the overlap decomposition and Paley-Zygmund.

use colorlab::graph::CountMode;
use colorlab::moments;
use num_rational::BigRational;
use num_traits::Zero;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let (n, k, budget) = (6, 3, 100_000_000);
    let h2 = moments::forbidden_histogram(n, k, 2, true, budget)?;
    let tables = moments::balanced_count_matrices(n, k);
    println!("n = {n}, k = {k}: {} balanced overlap tables", tables.len());
    for m in [3, 6, 9] {
        let direct = moments::moment_from_histogram(&h2, m)?;
        let split = tables
            .iter()
            .map(|t| moments::exact_overlap_moment_counts(n, m, t))
            .sum::<Result<BigRational, _>>()
            .unwrap_or_else(|_| BigRational::zero());
        println!("m = {m}: E[Z_bal^2] = {} ; sum over overlaps agrees: {}", moments::decimal_string(&direct, 8), direct == split);
    }
    let pr = moments::colorable_distribution(n, k, CountMode::All)?;
    for m in [6, 9, 12] {
        let ez = moments::exact_moment(n, m, k, 1, false, budget)?.exact.unwrap();
        let ez2 = moments::exact_moment(n, m, k, 2, false, budget)?.exact.unwrap();
        let pz = moments::paley_zygmund_exact(&ez, &ez2)?;
        println!("m = {m}: Paley-Zygmund {} <= P[colourable] {}", moments::decimal_string(&pz, 6), moments::decimal_string(&pr[m], 6));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
