// Where the stable matrix overtakes the barycentre as d grows.

use colorlab::variational;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    for k in [5, 10, 20, 40] {
        let c = variational::stable_crossover(k, 1e-12)?;
        println!(
            "k = {k:>2}: gap slope {:.6}, d* = {:.9} (closed form {:.9}), d_first = {:.6}",
            c.slope, c.d_star, c.d_star_closed_form, c.d_first
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
