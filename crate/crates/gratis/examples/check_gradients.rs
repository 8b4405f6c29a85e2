//! Verify analytic gradients of the full pipeline against central finite
//! differences, per parameter. The link family is used because it routes
//! every parameter group directly into the loss.

use gratis::config::{RunConfig, TaskFamily};
use gratis::gradcheck::grad_check;
use gratis::graph::TaskLabels;
use gratis::pipeline::{forward, Mode};
use gratis::train::cross_entropy;

fn main() {
    let mut cfg = RunConfig::default();
    cfg.task = TaskFamily::BinaryLinks;
    cfg.seed = 1;
    cfg.data_n_vertices = 6;
    let sample = cfg.generate(cfg.seed, 1).remove(0);
    let labels = match &sample.labels {
        TaskLabels::LinkClass(m) => m.values().copied().collect::<Vec<_>>(),
        _ => unreachable!("binary-links is a link task"),
    };
    let pcfg = cfg.pipeline_config();
    let mut params = pcfg.init_params(cfg.seed);

    let report = grad_check(
        |tape, bound, p| {
            let (logits, _) = forward(tape, bound, p, &pcfg, &sample, Mode::Train)?;
            cross_entropy(tape, logits, &labels, None)
        },
        &mut params,
        1e-5,
    )
    .expect("gradient check");

    for (name, err) in &report.per_param {
        println!("{name:16} max rel error {err:.3e}");
    }
    println!("overall: {:.3e}", report.max_rel_error());
    assert!(report.max_rel_error() <= 1e-4);
    assert!(report.nan_elements.is_empty());
}
