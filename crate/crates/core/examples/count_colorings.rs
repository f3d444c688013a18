// Exact colouring counts, clusters and good colourings on small graphs.

use colorlab::graph::{self, CountMode, Graph, Model, DEFAULT_BUDGET};
use colorlab::matrix::{ConstantsProfile, ModelParams};
use num_rational::BigRational;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    // A 5-cycle has (k-1)^5 - (k-1) proper k-colourings.
    let c5 = Graph::new(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)])?;
    for k in 2..=4 {
        println!("C5 with {k} colours: {}", graph::count_colorings(&c5, k, CountMode::All, DEFAULT_BUDGET)?);
    }
    let (n, k) = (15, 3);
    let sigma = graph::random_balanced(n, k, 3)?;
    let params = ModelParams::new(k, 5.0)?.with_n(n);
    let g = graph::sample_graph(Model::PlantedM, &params, Some(&sigma), 4)?;
    let prof = ConstantsProfile::desk(k);
    let total = graph::count_colorings(&g, k, CountMode::Balanced, DEFAULT_BUDGET)?;
    let cl = graph::cluster(&g, &sigma, &prof, DEFAULT_BUDGET)?;
    println!("planted n = {n}: {total} balanced colourings, cluster of sigma has {} members", cl.size());
    let good = graph::is_good(&g, &sigma, &BigRational::from_integer(total.into()), &prof, DEFAULT_BUDGET)?;
    println!("good-colouring tests: {good:?}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
