// Planted model with exactly m edges against the Bernoulli planted model.

use colorlab::moments;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let r = moments::planted_equivalence(6, 3, 6)?;
    println!("n = {}, k = {}, m = {}: {} bichromatic pairs, p = {}, E[edges] = {}", r.n, r.k, r.m, r.bichromatic_pairs, r.p.decimal, r.expected_edges);
    for e in &r.events {
        println!("  {:<20} P_m = {:.5}  P_p = {:.5}  ratio {:.3}", e.name, e.planted_m, e.planted_p, e.ratio);
    }
    println!("C fit = {:.4}, structural constant = {:.4}", r.c_fit, r.c_structural);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
