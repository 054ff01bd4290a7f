#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use ssada::ExperimentConfig;
use ssada_core::data::{DomainFamily, SampleId};
use ssada_core::dino::{BackboneSpec, FullStage, HeadStage, ProjectorSpec, SslConfig};
use ssada_core::nn::Activation;

/// Four small domains and tiny training budgets; a run takes about a second.
pub fn small_config() -> ExperimentConfig {
    let mut family = DomainFamily::table_one(6, 3);
    family.domains.truncate(4);
    for (d, (n, pos)) in family.domains.iter_mut().zip([(400, 80), (160, 24), (120, 54), (100, 12)]) {
        d.n_samples = n;
        d.positives = Some(pos);
    }
    let ssl = SslConfig {
        batch_size: 32,
        samples_per_epoch: Some(128),
        head_stage: HeadStage { epochs: 1, lr: 1e-3 },
        full_stage: FullStage { epochs: 1, ..FullStage::default() },
        probe_size: 32,
        ..SslConfig::default()
    };
    let mut cfg = ExperimentConfig {
        seeds: vec![0, 1],
        backbone: BackboneSpec {
            hidden: vec![12],
            feature_dim: 8,
            activation: Activation::Relu,
            output_activation: Activation::Relu,
        },
        projector: ProjectorSpec {
            hidden_dim: 16,
            output_dim: 16,
            ..ProjectorSpec::default()
        },
        pretrain: ssl.clone(),
        retrain: ssl,
        ..ExperimentConfig::default()
    };
    cfg.data.family = Some(family);
    cfg.corpus.n_samples = 200;
    cfg.probe.max_epochs = 15;
    cfg.adapt.steps = 20;
    cfg.adapt.domain_head_steps = 20;
    cfg
}

/// Ground-truth label of every target sample.
pub fn truth(cfg: &ExperimentConfig) -> BTreeMap<SampleId, u8> {
    let data = ssada::load_data(cfg).unwrap();
    data.targets
        .iter()
        .flat_map(|p| p.samples.iter().map(|s| (s.id, s.label.unwrap())))
        .collect()
}

/// Every result file in `dir`, by name.
pub fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}
