// The four random graph models and the overlap of two colourings.

use colorlab::graph::{self, Model};
use colorlab::matrix::ModelParams;

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let (n, k, d) = (300, 3, 6.0);
    let params = ModelParams::new(k, d)?.with_n(n);
    let sigma = graph::random_balanced(n, k, 7)?;
    for model in [Model::Gnm, Model::Gnp, Model::PlantedM, Model::PlantedP] {
        let g = graph::sample_graph(model, &params, Some(&sigma), 11)?;
        let v = graph::validate_coloring(&g, &sigma)?;
        println!("{model:?}: {} edges, sigma proper: {}", g.m(), v.proper);
    }
    let p = graph::planted_p(&sigma, params.m.unwrap())?;
    println!("planted-p edge probability {p}");
    let tau = graph::random_balanced(n, k, 8)?;
    let ov = graph::overlap(&sigma, &tau)?;
    println!("overlap of two random balanced colourings:\n{}", ov.matrix().to_json());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
