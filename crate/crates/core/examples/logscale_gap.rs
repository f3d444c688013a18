// How fast (1/n) ln E[Z_rho,bal] approaches f(rho).

use colorlab::matrix::{self, SpecialKind};
use colorlab::moments;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let (k, d) = (2, 2.0);
    for kind in [SpecialKind::Identity, SpecialKind::Barycenter] {
        let rho = matrix::special_matrix(kind, k, None)?;
        let pts: Vec<_> = [4, 6, 8, 10, 12].iter().map(|&n| moments::logscale_gap(n, k, d, &rho)).collect::<Result<_, _>>()?;
        for p in &pts {
            println!("{kind:?} n = {:>2}: counts {:?}, rate {:.6}, f {:.6}, gap {:.6}", p.n, p.counts, p.log_rate, p.f_realized, p.gap);
        }
        let fit = moments::fit_gap_constant(&pts);
        println!("{kind:?}: gap ~ C ln n / n with C fit {:.4}, C bound {:.4}", fit.c_fit, fit.c_bound);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
