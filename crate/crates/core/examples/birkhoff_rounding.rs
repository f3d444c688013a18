// Rounding an empirical overlap to the Birkhoff polytope, and region labels.

use colorlab::graph;
use colorlab::matrix::{self, ConstantsProfile, OverlapMatrix, SpecialKind};
use colorlab::moments;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let (n, k) = (100, 3);
    let s = graph::random_balanced(n, k, 1)?;
    let t = graph::random_balanced(n, k, 2)?;
    let counts = graph::overlap_counts(&s, &t)?;
    let rho = OverlapMatrix::from_flat(k, moments::matrix_from_counts(n, &counts))?;
    let out = moments::round_to_birkhoff(&rho);
    println!(
        "marginal deviation {:.4} -> distance moved {:.4}, doubly stochastic: {}",
        moments::marginal_deviation(&rho), rho.distance(&out), out.is_doubly_stochastic(1e-12)
    );
    let prof = ConstantsProfile::desk(k);
    for kind in [SpecialKind::Barycenter, SpecialKind::Identity, SpecialKind::SStable] {
        let m = matrix::special_matrix(kind, k, Some(1))?;
        println!("{kind:?}: {:?}", moments::laplace_partition(&m, 0.05, &prof)?.label);
    }
    println!("rounded empirical overlap: {:?}", moments::laplace_partition(&out, 0.05, &prof)?.label);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
