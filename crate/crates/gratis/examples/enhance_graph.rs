//! Build the task-specific representation of one SBM sample: learned
//! topology adds edges to the basic adjacency and every presented edge
//! receives a multi-dimensional feature vector.

use gratis::config::RunConfig;
use gratis::pipeline::enhance;

fn main() {
    let mut cfg = RunConfig::default();
    cfg.data_n_vertices = 10;
    let sample = cfg.generate(11, 1).remove(0);
    let pcfg = cfg.pipeline_config();
    let params = pcfg.init_params(cfg.seed);

    let enhanced = enhance(&params, &pcfg, &sample).expect("enhance");
    let basic: usize = sample.adjacency.data.iter().map(|&a| a as usize).sum();
    let learned: usize = enhanced.adjacency.data.iter().map(|&a| a as usize).sum();
    println!("basic edges:   {basic} (edge dim {})", sample.edges.edge_dim);
    println!("learned edges: {learned} (edge dim {})", enhanced.edges.edge_dim);

    // the union topology never removes a basic edge
    for i in 0..sample.n_vertices() {
        for j in 0..sample.n_vertices() {
            if sample.adjacency.at2(i, j) == 1.0 {
                assert_eq!(enhanced.adjacency.at2(i, j), 1.0);
            }
        }
    }
    let ((i, j), feat) = enhanced.edges.iter().next().expect("an edge");
    println!("edge ({i},{j}) feature: {feat:?}");
    assert!(enhanced.validate().is_empty());
    println!("enhanced sample validates");
}
