//! Train vertex classification on a small stochastic block model family and
//! compare the plain predictor against the fully enhanced pipeline.

use gratis::config::RunConfig;
use gratis::pipeline::{evaluate, train_full, Ablation};
use gratis::train::AdamW;

fn main() {
    let mut cfg = RunConfig::default();
    cfg.epochs = 12;
    cfg.data_n_vertices = 12;
    let train = cfg.generate(cfg.seed, 40);
    let test = cfg.generate(cfg.seed + 1, 10);

    for ablation in [Ablation::Baseline, Ablation::TtpMefg] {
        cfg.ablation = ablation;
        let pcfg = cfg.pipeline_config();
        let tcfg = cfg.train_config();
        let mut params = pcfg.init_params(cfg.seed);
        let mut opt = AdamW::new(tcfg.lr, tcfg.weight_decay);
        let logs = train_full(&pcfg, &tcfg, &train, &mut params, &mut opt)
            .expect("training");
        let outcome = evaluate(&pcfg, &params, &test, cfg.hits_k).expect("eval");
        println!(
            "{ablation:?}: final train loss {:.4}, test accuracy {:.3}, macro F1 {:.3}",
            logs.last().expect("logs").value,
            outcome.report.accuracy,
            outcome.report.macro_f1
        );
    }
}
