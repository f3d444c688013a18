// The overlap objective at the barycentre, the identity and the stable matrix.

use colorlab::matrix::{self, ModelParams, SpecialKind};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let k = 5;
    for d in [4.0, 10.0, 14.0] {
        let params = ModelParams::new(k, d)?;
        let bar = matrix::special_matrix(SpecialKind::Barycenter, k, None)?;
        let id = matrix::special_matrix(SpecialKind::Identity, k, None)?;
        let st = matrix::special_matrix(SpecialKind::Stable, k, None)?;
        let fb = matrix::f_value(&bar, &params)?;
        let closed = 2.0 * (k as f64).ln() + d * (1.0 - 1.0 / k as f64).ln();
        println!(
            "d = {d:>5}: f(bar) = {fb:.9} (closed form {closed:.9}), f(id) = {:.9}, f(stable) = {:.9}",
            matrix::f_value(&id, &params)?,
            matrix::f_value(&st, &params)?
        );
        assert!((fb - closed).abs() < 1e-12);
    }
    let g = matrix::f_gradient(&matrix::special_matrix(SpecialKind::Stable, k, None)?, &ModelParams::new(k, 10.0)?)?;
    println!("gradient at the stable matrix, first row: {:?}", g[0]);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
