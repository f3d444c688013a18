// Core of a planted graph, the W/U/Z sets, free vertices and the cluster bound.

use colorlab::graph::{self, Model, DEFAULT_BUDGET};
use colorlab::matrix::{ConstantsProfile, ModelParams};
use colorlab::peel::{self, CheckMode, Property};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let (n, k, d) = (45, 3, 15.0);
    let prof = ConstantsProfile::desk(k);
    let sigma = graph::random_balanced(n, k, 5)?;
    let g = graph::sample_graph(Model::PlantedM, &ModelParams::new(k, d)?.with_n(n), Some(&sigma), 6)?;
    let core = peel::core(&g, &sigma, &prof)?;
    let cr = peel::cr_sets(&g, &sigma, &prof)?;
    let census = peel::vertex_census(&g, &sigma, &core.core_vertices, &prof)?;
    println!("core: {} of {n} vertices, {} peeled", core.core_vertices.len(), core.peel_trace.len());
    println!("|W| = {}, |U| = {}, |Z| = {}", cr.w_union.len(), cr.u.len(), cr.z.len());
    let rest = cr.remainder(n);
    println!("V minus (W and Z) has {} vertices, all in the core: {}", rest.len(), rest.iter().all(|v| core.core_vertices.contains(v)));
    let bound = peel::cluster_bound(&census, k);
    let cl = graph::cluster(&g, &sigma, &prof, DEFAULT_BUDGET)?;
    println!("|F1| = {}, |F2| = {}, bound = {bound}, cluster size = {}", census.f1.len(), census.f2.len(), cl.size());
    for p in [Property::P2, Property::P3, Property::P4] {
        let out = peel::check_property(&g, Some(&sigma), p, &prof, CheckMode::Auto { budget: 1_000_000, trials: 200, seed: 1 })?;
        println!("{p:?}: {:?}", out.holds());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
