// Chernoff bounds in the phi form against exact binomial tails.

use colorlab::moments::{self, Side};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    println!("phi(1) = {:.12}", moments::phi(1.0)?);
    for (n, p, t) in [(20u64, 0.3, 4.0), (100, 0.1, 5.0), (500, 0.5, 30.0)] {
        let mu = n as f64 * p;
        for side in [Side::Upper, Side::Lower] {
            println!(
                "Bin({n}, {p}) {side:?} t = {t}: exact {:.3e} <= bound {:.3e}",
                moments::binomial_tail(n, p, t, side),
                moments::chernoff_tail(mu, t, side)?
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
