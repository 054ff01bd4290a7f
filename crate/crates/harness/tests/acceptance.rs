//! One PASS/FAIL line per acceptance criterion. Runs the full experiments,
//! so expect several minutes in an optimized build.

mod common;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssada::{emit_results, load_data, run_workflow, ExperimentConfig, ExperimentReport, LabelerMode};
use ssada_annotate::{QueryList, QueryStatus, RoundStore, ServiceHandle, ServiceLabeler};
use ssada_core::data::{gen_family, stack_features, DomainFamily, SampleId};
use ssada_core::dino::{collapse_floor, pretrain_ssl, BackboneSpec, DinoNet, ProjectorSpec, SslConfig};
use ssada_core::labeler::OracleLabeler;
use ssada_core::metrics::{auprc, RankedPredictions, BASELINE};
use ssada_core::nn::{Activation, GrlGate, Network, Tape, Tensor, Var};
use ssada_core::sampler::{
    entropy, score_aada, select_aada, select_badge, select_clue, select_uniform, AcquisitionInput,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---- gradient check ----

fn random_net(rng: &mut ChaCha8Rng) -> Network<f64> {
    let depth = rng.random_range(1..=3);
    let mut dims = vec![rng.random_range(2..=4)];
    dims.extend((0..depth).map(|_| rng.random_range(2..=5)));
    let acts: Vec<Activation> = (0..depth)
        .map(|_| [Activation::Relu, Activation::Tanh, Activation::Identity, Activation::Softmax][rng.random_range(0..4)])
        .collect();
    Network::init(&dims, &acts, rng).unwrap()
}

fn relu_margin(net: &Network<f64>, x: &Tensor<f64>) -> f64 {
    let mut h = x.clone();
    let mut margin = f64::INFINITY;
    for l in net.layers() {
        let z = h.matmul(&l.weights).unwrap().add_row(&l.bias).unwrap();
        if l.activation == Activation::Relu {
            margin = z.data().iter().fold(margin, |m, v| m.min(v.abs()));
        }
        h = Network::new(vec![l.clone()]).unwrap().forward(&h).unwrap();
    }
    margin
}

fn loss<'t>(kind: usize, z: Var<'t, f64>, targets: &[usize], weights: &[f64]) -> Var<'t, f64> {
    match kind {
        0 => z.cross_entropy(targets, weights).unwrap(),
        1 => z.mean_entropy(),
        _ => z.tanh().mean(),
    }
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut checked, mut worst) = (0, 0.0f64);
    while checked < 50 {
        let net = random_net(&mut rng);
        let (n, d, k) = (rng.random_range(1..=4), net.input_dim(), net.output_dim());
        let x = Tensor::matrix(n, d, (0..n * d).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap();
        if relu_margin(&net, &x) < 1e-3 {
            continue;
        }
        let kind = checked % 3;
        let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
        let value = |net: &Network<f64>| {
            let tape = Tape::new();
            let z = net.bind(&tape, false).forward(tape.constant(x.clone())).unwrap();
            loss(kind, z, &targets, &weights).item()
        };
        let tape = Tape::new();
        let bound = net.bind(&tape, true);
        let z = bound.forward(tape.constant(x.clone())).unwrap();
        let analytic = bound.grads(&tape.backward(loss(kind, z, &targets, &weights)).unwrap()).flatten();
        let mut j = 0;
        for p in 0..net.params().count() {
            for i in 0..net.params().nth(p).unwrap().len() {
                let (mut plus, mut minus) = (net.clone(), net.clone());
                plus.params_mut().nth(p).unwrap().data_mut()[i] += 1e-6;
                minus.params_mut().nth(p).unwrap().data_mut()[i] -= 1e-6;
                let numeric = (value(&plus) - value(&minus)) / 2e-6;
                let a = analytic[j];
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
                j += 1;
            }
        }
        checked += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst < 1e-4 && secs < 30.0, format!("50 nets, worst rel err {worst:.1e}, {secs:.1}s"))
}

fn grl_bitwise() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for lambda in [0.0, 0.5, 1.0] {
        let up: Vec<f64> = (0..40).map(|_| rng.random_range(-5.0..5.0)).collect();
        let upstream = Tensor::matrix(5, 8, up.clone()).unwrap();
        let tape = Tape::new();
        let x = tape.param(Tensor::zeros(&[5, 8]));
        let gate = GrlGate::new(lambda).unwrap();
        let g = tape.backward(gate.apply(x).mul(tape.constant(upstream.clone())).unwrap().sum()).unwrap();
        let direct = gate.backward(&upstream);
        let grads = g.get(x).unwrap();
        for ((t, d), u) in grads.data().iter().zip(direct.data()).zip(&up) {
            let want = (-(lambda * u)).to_bits();
            if t.to_bits() != want || d.to_bits() != want {
                return Err(format!("lambda {lambda}: {t} / {d} vs {}", -(lambda * u)));
            }
        }
    }
    Ok("lambda 0, 0.5, 1 on tape and gate".into())
}

// ---- AUPRC ----

fn brute_force(scores: &[f64], labels: &[u8]) -> f64 {
    let positives = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut total = 0.0;
    for (i, &s) in scores.iter().enumerate() {
        if labels[i] == 1 {
            let above: Vec<usize> = (0..scores.len()).filter(|&j| scores[j] >= s).collect();
            total += above.iter().filter(|&&j| labels[j] == 1).count() as f64 / above.len() as f64;
        }
    }
    total / positives
}

fn ap(scores: Vec<f64>, labels: Vec<u8>) -> f64 {
    auprc(&RankedPredictions::new(scores, labels).unwrap()).unwrap()
}

fn auprc_oracle() -> Outcome {
    let mut patterns = 0;
    for n in 1..=8usize {
        for tie in [false, true] {
            let scores: Vec<f64> = (0..n).map(|i| if tie { (i / 2) as f64 } else { ((i * 5 + 3) % n) as f64 }).collect();
            for mask in 1u32..(1 << n) {
                let labels: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
                let (got, want) = (ap(scores.clone(), labels.clone()), brute_force(&scores, &labels));
                if (got - want).abs() > 1e-12 {
                    return Err(format!("n={n} mask={mask:b}: {got} vs {want}"));
                }
                patterns += 1;
            }
        }
    }
    for (n, p) in [(557usize, 25usize), (220, 99), (9, 4)] {
        let labels: Vec<u8> = (0..n).map(|i| u8::from(i < p)).collect();
        let got = ap(vec![0.3; n], labels);
        if got != p as f64 / n as f64 {
            return Err(format!("constant scores n={n}: {got}"));
        }
    }
    Ok(format!("{patterns} label patterns, constant scores exact"))
}

// ---- samplers ----

fn input(id: u64, rng: &mut ChaCha8Rng, d: Option<f64>) -> AcquisitionInput<f64> {
    let p = rng.random_range(0.0..1.0);
    AcquisitionInput {
        id: SampleId(id),
        features: vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
        class_probs: vec![1.0 - p, p],
        domain_prob: d.unwrap_or_else(|| rng.random_range(0.01..0.99)),
    }
}

fn aada_formula() -> Outcome {
    let cases: [(f64, [f64; 2], f64); 5] = [
        (0.5, [0.5, 0.5], 0.693_147_180_559_945_3),
        (0.2, [0.5, 0.5], 2.772_588_722_239_781),
        (0.8, [0.9, 0.1], 0.081_270_743_347_862_04),
        (0.1, [0.7, 0.3], 5.497_778_718_494_041),
        (0.99, [0.6, 0.4], 0.006_798_097_646_558_153),
    ];
    for (d, p, want) in cases {
        let got = score_aada(d, &p).unwrap();
        if (got - want).abs() >= 1e-9 {
            return Err(format!("d={d} p={p:?}: {got} vs {want}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let xs: Vec<_> = (0..80).map(|i| input(i, &mut rng, Some(0.5))).collect();
    let mut by_entropy: Vec<(f64, SampleId)> = xs.iter().map(|x| (entropy(&x.class_probs).unwrap(), x.id)).collect();
    by_entropy.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let same = select_aada(&xs, xs.len()).unwrap().ids == by_entropy.into_iter().map(|e| e.1).collect::<Vec<_>>();
    ensure(same, "5 hand values; d=0.5 ordering equals entropy ordering".into())
}

fn sampler_checks() -> Outcome {
    let pool: Vec<SampleId> = (0..25).map(SampleId).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut counts = [0usize; 25];
    let draws = 20_000;
    for _ in 0..draws {
        counts[select_uniform(&pool, 1, &mut rng).ids[0].0 as usize] += 1;
    }
    let e = draws as f64 / 25.0;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    let p = 1.0 - ChiSquared::new(24.0).unwrap().cdf(stat);

    let mut data_rng = ChaCha8Rng::seed_from_u64(4);
    let xs: Vec<_> = (0..120).map(|i| input(i, &mut data_rng, None)).collect();
    let run = |seed: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        vec![
            select_uniform(&pool, 10, &mut r).ids,
            select_aada(&xs, 10).unwrap().ids,
            select_clue(&xs, 10, 1.0, &mut r).unwrap().ids,
            select_badge(&xs, 10, &mut r).unwrap().ids,
        ]
    };
    let deterministic = (0..5).all(|s| run(s) == run(s));
    ensure(
        p > 0.001 && deterministic,
        format!("chi-square p = {p:.3}; uniform/aada/clue/badge repeat per seed: {deterministic}"),
    )
}

// ---- DINO ----

fn dino_mechanics() -> Outcome {
    let start = Instant::now();
    let mut fam = DomainFamily::table_one(8, 13);
    fam.domains.truncate(2);
    fam.domains[0].n_samples = 1600;
    fam.domains[0].positives = Some(160);
    fam.domains[1].n_samples = 400;
    fam.domains[1].positives = Some(16);
    let pools = gen_family::<f64>(&fam).unwrap();
    let data = stack_features(&[&pools[0], &pools[1]]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let backbone = BackboneSpec::default().build(8, &mut rng).unwrap();
    let proj = ProjectorSpec { hidden_dim: 64, output_dim: 64, ..ProjectorSpec::default() };
    let net = DinoNet::with_projector(backbone, proj, &mut rng).unwrap();
    let out = pretrain_ssl(&data, net, &SslConfig::default(), &mut rng).unwrap();
    let (first, last) = (out.eval_losses[0], *out.eval_losses.last().unwrap());
    let min_h = out.teacher_entropy.iter().cloned().fold(f64::INFINITY, f64::min);
    let secs = start.elapsed().as_secs_f64();
    ensure(
        last < first && !out.collapsed && min_h > collapse_floor(64) && secs < 180.0,
        format!("loss {first:.3} -> {last:.3}, min teacher entropy {min_h:.2}, {secs:.1}s"),
    )
}

// ---- experiments ----

fn oracle_run(cfg: &ExperimentConfig) -> ExperimentReport {
    let data = load_data(cfg).unwrap();
    let oracle = OracleLabeler::new(data.targets.iter());
    run_workflow(cfg, |_| oracle.clone()).unwrap()
}

fn means(report: &ExperimentReport, method: &str) -> BTreeMap<String, f64> {
    report.grid.domains.iter().map(|d| (d.clone(), report.grid.get(d, method).unwrap().mean)).collect()
}

fn claim_retrain(full_baseline: &mut Option<BTreeMap<String, f64>>) -> Outcome {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::default();
    cfg.grid.clear();
    let on = oracle_run(&cfg);
    cfg.workflow.ssl_retrain = false;
    let off = oracle_run(&cfg);
    let secs = start.elapsed().as_secs_f64();
    let (on, off) = (means(&on, BASELINE), means(&off, BASELINE));
    let wins = on.iter().filter(|(d, v)| **v >= off[*d]).count();
    *full_baseline = Some(on);
    ensure(wins >= 6 && secs < 600.0, format!("retrained >= not retrained on {wins}/10 targets, {secs:.0}s"))
}

fn claim_aada_dann(retrained: Option<&BTreeMap<String, f64>>) -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let report = oracle_run(&cfg);
    let secs = start.elapsed().as_secs_f64();
    let ok = report.count_at_least("aada-dann", -0.02).unwrap();
    let rows = report.grid.deltas("aada-dann", BASELINE).unwrap();
    let worst = rows.iter().map(|r| r.delta).fold(f64::INFINITY, f64::min);
    // The baseline column is the same run as the retrained probe above.
    let consistent = retrained.is_none_or(|b| *b == means(&report, BASELINE));
    ensure(
        ok >= 8 && secs < 1800.0 && consistent,
        format!("delta >= -0.02 on {ok}/10 targets (worst {worst:+.4}), full grid {secs:.0}s"),
    )
}

/// Polls the service and answers every pending query with the ground truth.
fn annotator(base: String, truth: BTreeMap<SampleId, u8>, done: Arc<AtomicBool>) -> std::thread::JoinHandle<usize> {
    std::thread::spawn(move || {
        let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        let mut sent = 0;
        while !done.load(Ordering::Relaxed) {
            let mut resp = agent.get(format!("{base}/rounds/current/queries")).call().unwrap();
            if resp.status() == 200 {
                let list: QueryList = resp.body_mut().read_json().unwrap();
                for q in list.queries.iter().filter(|q| q.status == QueryStatus::Pending) {
                    let body = serde_json::json!({"sample_id": q.sample_id, "label": truth[&q.sample_id], "annotator": "script"});
                    let code = agent.post(format!("{base}/labels")).send_json(body).unwrap().status();
                    assert_eq!(code, 200);
                    sent += 1;
                }
            }
            std::thread::sleep(Duration::from_millis(2));
        }
        sent
    })
}

fn service_equivalence() -> Outcome {
    let mut cfg = common::small_config();
    cfg.rounds = 2;
    let oracle = oracle_run(&cfg);

    cfg.labeler = LabelerMode::Service;
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(RoundStore::with_journal(dir.path().join("rounds.jsonl")).unwrap());
    let svc = ServiceHandle::spawn(store.clone(), "127.0.0.1:0".parse().unwrap()).unwrap();
    let done = Arc::new(AtomicBool::new(false));
    let client = annotator(svc.url(), common::truth(&cfg), done.clone());
    let labeler = ServiceLabeler::new(store, Duration::from_secs(60));
    let served = run_workflow(&cfg, |_| labeler.clone());
    done.store(true, Ordering::Relaxed);
    let sent = client.join().unwrap();
    svc.stop().unwrap();
    let served = served.map_err(|e| e.to_string())?;

    let (a, b) = (dir.path().join("oracle"), dir.path().join("service"));
    emit_results(&oracle, &a).unwrap();
    emit_results(&served, &b).unwrap();
    let same = common::files(&a) == common::files(&b);
    ensure(same && oracle == served, format!("{sent} labels over HTTP; result files identical: {same}"))
}

fn byte_identical_reruns() -> Outcome {
    let mut cfg = common::small_config();
    cfg.rounds = 2;
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        emit_results(&oracle_run(&cfg), d.path()).unwrap();
    }
    let (a, b) = (common::files(dirs[0].path()), common::files(dirs[1].path()));
    let bytes: usize = a.values().map(Vec::len).sum();
    ensure(a == b, format!("{} files, {bytes} bytes", a.len()))
}

fn main() {
    let mut retrained = None;
    let mut failed = 0;
    let mut report = |name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag}  {name:<26} {detail}");
    };
    report("gradient check", gradient_check());
    report("reversal gate", grl_bitwise());
    report("auprc oracle", auprc_oracle());
    report("aada formula", aada_formula());
    report("samplers", sampler_checks());
    report("dino mechanics", dino_mechanics());
    report("ssl retraining helps", claim_retrain(&mut retrained));
    report("aada-dann vs baseline", claim_aada_dann(retrained.as_ref()));
    report("oracle/service equivalence", service_equivalence());
    report("byte-identical reruns", byte_identical_reruns());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
