// Threshold formulas, the windows S_k and the density of their union.

use colorlab::thresholds;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", thresholds::thresholds_csv([3, 5, 10, 20, 50, 100])?);
    for d in [5.0, 40.0, 42.37, 100.0] {
        match thresholds::chromatic_window(d, 3) {
            Some(hit) => println!("d = {d}: in S_{}{}", hit.k, if hit.overlapping { " (overlapping)" } else { "" }),
            None => println!("d = {d}: in a gap between windows"),
        }
    }
    let k0 = thresholds::find_k0(2000);
    println!("ordering and window consistency hold from k0 = {k0} up to 2000");
    for z in [1e2, 1e4, 1e6] {
        println!("density of S on (0, {z:e}] = {:.5}", thresholds::density_s(z, k0));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
