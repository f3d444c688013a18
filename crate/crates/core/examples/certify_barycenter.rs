// Multistart ascent over the Birkhoff polytope, region by region.

use colorlab::matrix::ModelParams;
use colorlab::thresholds;
use colorlab::variational::{self, AscentConfig};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let k = 8;
    let d = thresholds::d_cond(k as f64) - 0.5;
    let params = ModelParams::new(k, d)?;
    let mut cfg = AscentConfig::new(k, 2024);
    cfg.multistart_count = 48;
    let rep = variational::certify_barycenter_max(&params, &cfg, None)?;
    println!("k = {k}, d = {d:.4}, f(bar) = {:.10}", rep.reference_value);
    for r in &rep.regions {
        println!(
            "  s = {:>2}: {} starts, best f = {:.10}, distance to bar = {:.2e}, all converged: {}",
            r.s, r.starts, r.best_value, r.distance_to_barycenter, r.all_converged
        );
    }
    println!("margin best - f(bar) = {:.3e}; winner is the barycentre: {}", rep.margin, rep.converged_to_barycenter);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
