// Local moves: averaging rows, the sign of a mass transfer, and the xi function.

use colorlab::matrix::{self, ModelParams, OverlapMatrix};
use colorlab::variational::{self, XiProfile};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let k = 4;
    let params = ModelParams::new(k, 6.0)?;
    let rho = OverlapMatrix::new(vec![
        vec![0.40, 0.30, 0.20, 0.10],
        vec![0.10, 0.40, 0.30, 0.20],
        vec![0.20, 0.10, 0.40, 0.30],
        vec![0.30, 0.20, 0.10, 0.40],
    ])?;
    let avg = variational::average_rows(&rho, 0, &[1, 2, 3])?;
    println!("f before {:.8}, after averaging row 0 over columns 1..3: {:.8}", matrix::f_value(&rho, &params)?, matrix::f_value(&avg, &params)?);
    println!("moving mass from (0,0) to (0,3): sign {}", variational::variation_sign(&rho, 0, 0, 3, &params)?);
    println!("nontrivial root of the pairwise transfer: {:?}", variational::delta_star(&rho, 0, 3, &params)?);
    let xi = XiProfile::new(20)?;
    let check = xi.grid_check(4001);
    println!("xi at k = 20: minimiser mu = {:.6}, grid sign change near {:?}", xi.mu, check.sign_change_near);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
