// Monte Carlo colourability and moments against exact values.

use colorlab::moments;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let budget = 10_000_000;
    let exact = moments::exact_colorable_probability(8, 6, 2, budget)?;
    let est = moments::mc_colorable(8, 6, 2, 2000, 42, budget)?;
    println!(
        "P[G(8,6) bipartite]: exact {} ; estimate {:.4} +- {:.4} ({} interval)",
        moments::decimal_string(&exact, 6), est.fraction, est.ci95, est.interval
    );
    let mc = moments::mc_moment(10, 12, 3, 1, false, 500, 7, budget)?;
    let ex = moments::exact_moment(10, 12, 3, 1, false, budget)?;
    println!("E[Z] at n = 10, m = 12, k = 3: exact {:.3}, estimate {:.3} +- {:.3}", ex.value_f64, mc.value_f64, mc.std_error.unwrap());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
