// Hessian of the objective at the barycentre: closed form, eigensolver and finite differences.

use colorlab::matrix::ModelParams;
use colorlab::variational;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    for (k, d) in [(3, 2.0), (4, 5.0), (6, 12.0)] {
        let params = ModelParams::new(k, d)?;
        let rep = variational::hessian_at_barycenter(&params)?;
        let fd = variational::finite_difference_hessian(&params, 1e-3);
        let rel = (&fd - &rep.matrix).abs().max() / rep.matrix.abs().max();
        println!(
            "k = {k}, d = {d}: c = {:.6}, spectrum {:?}, eigensolver error {:.1e}, finite-difference relative error {rel:.1e}",
            rep.closed_form_c, rep.spectrum, rep.max_eigen_error
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
