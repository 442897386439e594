//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

use std::cell::Cell;
use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use subalign::data::{generate_shift_instance, subsample, FeatureDataset, FeatureSource, ShiftInstance, ShiftSpec};
use subalign::linalg::{condition_number, orthonormality_defect};
use subalign::losses::{
    auxiliary_loss, conditional_entropy, cross_entropy, grad_auxiliary_wrt_phi, grad_primary_wrt_theta, primary_loss,
    LossWeights,
};
use subalign::model::{Parameters, SoftmaxClassifier};
use subalign::subspace::{alignment_cost, closed_form_alignment, fit_subspace, AlignmentMap, Subspace};
use subalign::trainer::{phi_dynamics, run, train, train_ensemble, BlockEvent, BootstrapPlan, RunOptions, TrainObserver};
use subalign::{Mode, TrainConfig};
use subalign_cli::{cmd_adapt, cmd_synth, AdaptArgs, DataArgs, ReportFormat, RunArgs, SynthArgs, TrainOverrides};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

fn to_nalgebra(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn orthonormal_basis(rng: &mut ChaCha8Rng, dim: usize, d: usize) -> Subspace<f64> {
    let q = to_nalgebra(normal(rng, dim, d).view()).qr().q();
    Subspace::from_basis(Array2::from_shape_fn((dim, d), |(i, j)| q[(i, j)])).unwrap()
}

fn closed_form_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_gap = 0.0f64;
    for pair in 0..50 {
        let zt = orthonormal_basis(&mut rng, 20, 5);
        let zs = orthonormal_basis(&mut rng, 20, 5);
        let phi = closed_form_alignment(&zt, &zs).unwrap();
        let best = alignment_cost(&zt, &phi, &zs).unwrap();
        for _ in 0..1000 {
            let scale = 10f64.powf(rng.random_range(-4.0..0.0));
            let perturbed = AlignmentMap::new(phi.phi().to_owned() + normal(&mut rng, 5, 5) * scale).unwrap();
            if alignment_cost(&zt, &perturbed, &zs).unwrap() < best {
                return Err(format!("pair {pair}: a perturbation beats the closed form"));
            }
        }
        let (bt, bs) = (zt.basis(), zs.basis());
        let mut gd = Array2::<f64>::zeros((5, 5));
        for _ in 0..5000 {
            let grad = bt.t().dot(&(bt.dot(&gd) - bs)) * 2.0;
            gd.scaled_add(-0.1, &grad);
        }
        let gd_cost = (bt.dot(&gd) - bs).mapv(|v| v * v).sum();
        worst_gap = worst_gap.max((best - gd_cost).abs());
    }
    check(worst_gap < 1e-6, format!("50 pairs x 1000 perturbations, max |cost - GD cost| = {worst_gap:.2e}"))
}

fn max_fd_error<P: Parameters<f64> + Clone>(params: &P, analytic: &P, f: impl Fn(&P) -> f64) -> f64 {
    const H: f64 = 1e-6;
    let mut worst = 0.0f64;
    let lens: Vec<usize> = params.slices().iter().map(|s| s.len()).collect();
    for (s, &len) in lens.iter().enumerate() {
        for i in 0..len {
            let mut plus = params.clone();
            plus.slices_mut()[s][i] += H;
            let mut minus = params.clone();
            minus.slices_mut()[s][i] -= H;
            let numeric = (f(&plus) - f(&minus)) / (2.0 * H);
            let a = analytic.slices()[s][i];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8));
        }
    }
    worst
}

fn gradient_correctness() -> Outcome {
    let (d, sub, c, m) = (8, 3, 3, 16);
    let random_classifier = |rng: &mut ChaCha8Rng| {
        let b = Array1::from_shape_simple_fn(c, || 0.5 * rng.sample::<f64, _>(StandardNormal));
        SoftmaxClassifier::new(normal(rng, d, c) * 0.5, b).unwrap()
    };
    let random_weights = |rng: &mut ChaCha8Rng| LossWeights {
        lambda_c: rng.random_range(0.05..1.0),
        lambda_cb: rng.random_range(0.05..1.0),
        gamma_c: rng.random_range(0.05..1.0),
        gamma_cb: rng.random_range(0.05..1.0),
    };
    let (mut primary, mut auxiliary) = (0.0f64, 0.0f64);
    for point in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + point);
        let clf = random_classifier(&mut rng);
        let xs = normal(&mut rng, m, d);
        let ys: Vec<usize> = (0..m).map(|_| rng.random_range(0..c)).collect();
        let xt = normal(&mut rng, m, d);
        let w = random_weights(&mut rng);
        let g = grad_primary_wrt_theta(&clf, xs.view(), &ys, xt.view(), &w).unwrap();
        let g = SoftmaxClassifier::new(g.weights, g.bias).unwrap();
        primary = primary.max(max_fd_error(&clf, &g, |p| primary_loss(p, xs.view(), &ys, xt.view(), &w).unwrap().total));

        let mut rng = ChaCha8Rng::seed_from_u64(2000 + point);
        let zs = fit_subspace(normal(&mut rng, 40, d).view(), sub).unwrap();
        let zt = fit_subspace(normal(&mut rng, 40, d).view(), sub).unwrap();
        let clf = random_classifier(&mut rng);
        let xt = normal(&mut rng, m, d);
        let w = random_weights(&mut rng);
        let init = closed_form_alignment(&zt, &zs).unwrap();
        let phi = AlignmentMap::new(init.phi().to_owned() + normal(&mut rng, sub, sub) * 0.3).unwrap();
        let g = AlignmentMap::new(grad_auxiliary_wrt_phi(&phi, &zt, &zs, &clf, xt.view(), &w).unwrap()).unwrap();
        auxiliary = auxiliary.max(max_fd_error(&phi, &g, |p| auxiliary_loss(p, &zt, &zs, &clf, xt.view(), &w).unwrap().total));
    }
    check(
        primary < 1e-5 && auxiliary < 1e-5,
        format!("max relative error: primary {primary:.2e}, auxiliary {auxiliary:.2e}"),
    )
}

fn orthonormality_and_reconstruction() -> Outcome {
    let (mut defect, mut gap) = (0.0f64, 0.0f64);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(20..80);
        let dim = rng.random_range(4..16);
        let d = rng.random_range(1..dim);
        let x = normal(&mut rng, n, dim);
        let sub = fit_subspace(x.view(), d).unwrap();
        defect = defect.max(orthonormality_defect(sub.basis()));
        let centered = &x - &x.mean_axis(ndarray::Axis(0)).unwrap();
        let mut s: Vec<f64> = to_nalgebra(centered.view()).singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        let discarded: f64 = s[d..].iter().map(|v| v * v).sum();
        gap = gap.max((sub.reconstruction_error(x.view()).unwrap() - discarded).abs());
    }
    check(defect < 1e-8 && gap < 1e-8, format!("20 instances, max ‖ZᵀZ − I‖_F {defect:.2e}, max energy gap {gap:.2e}"))
}

fn pinned() -> ShiftInstance<f64> {
    generate_shift_instance(&ShiftSpec::default()).unwrap()
}

/// Golden target-test accuracies on the pinned task, as correct counts out of 600.
const PINNED: [(Mode, usize); 5] = [
    (Mode::NoAdapt, 382),
    (Mode::PrimaryOnly, 449),
    (Mode::Independent, 580),
    (Mode::Joint, 580),
    (Mode::Alternating, 580),
];
const PINNED_K3: usize = 580;
const PINNED_HALF_TARGET: usize = 577;

fn matches_count(acc: f64, count: usize) -> bool {
    (acc - count as f64 / 600.0).abs() < 1e-12
}

fn ablation_ordering(inst: &ShiftInstance<f64>) -> Outcome {
    let target = inst.target.without_labels();
    let mut accs = Vec::new();
    let mut pinned_ok = true;
    for (mode, count) in PINNED {
        let report = train(&inst.source, &target, &TrainConfig::default().with_mode(mode), inst.target_test.as_ref()).unwrap();
        let acc = report.target_accuracy.unwrap();
        pinned_ok &= matches_count(acc, count);
        accs.push(acc);
    }
    let (a1, a3, a5) = (accs[0], accs[2], accs[4]);
    let table: Vec<String> = PINNED.iter().zip(&accs).map(|((m, _), a)| format!("{}={:.2}", m.label(), 100.0 * a)).collect();
    check(
        a5 - a1 >= 0.10 && a3 <= a5 && pinned_ok,
        format!("{} (pinned values {})", table.join(" "), if pinned_ok { "match" } else { "differ" }),
    )
}

fn phi_dynamics_check(inst: &ShiftInstance<f64>) -> Outcome {
    let report = train(&inst.source, &inst.target.without_labels(), &TrainConfig::default(), None).unwrap();
    let (drift, steps) = phi_dynamics(&report).unwrap();
    let cond = condition_number(report.final_phis()[0].phi()).unwrap();
    let (first, last) = (steps[0], *steps.last().unwrap());
    check(
        drift.iter().all(|&d| d > 0.0) && last < first && cond < 1e6,
        format!("drift at t=1 {:.3e}, step first {first:.3e} last {last:.3e}, cond(Φ) {cond:.3}", drift[0]),
    )
}

fn ensemble_gain(inst: &ShiftInstance<f64>) -> Outcome {
    let target = inst.target.without_labels();
    let test = inst.target_test.as_ref();
    let config = TrainConfig::default();
    let plain = train(&inst.source, &target, &config, test).unwrap();
    let k1 = train_ensemble(&inst.source, &target, &config, 1, test).unwrap();
    let k3 = train_ensemble(&inst.source, &target, &config, 3, test).unwrap();
    let bit_match = plain.to_document() == k1.to_document();
    let (a1, a3) = (k1.target_accuracy.unwrap(), k3.target_accuracy.unwrap());
    check(
        a3 >= a1 && bit_match && matches_count(a3, PINNED_K3),
        format!("k=1 {:.2}, k=3 {:.2}, k=1 bit-matches plain training: {bit_match}", 100.0 * a1, 100.0 * a3),
    )
}

fn reduced_data(inst: &ShiftInstance<f64>) -> Outcome {
    let config = TrainConfig::default();
    let test = inst.target_test.as_ref();
    let full_target = inst.target.without_labels();
    let half_target = subsample(&full_target, 0.5, config.seed).unwrap();
    let full = train(&inst.source, &full_target, &config, test).unwrap().target_accuracy.unwrap();
    let half = train(&inst.source, &half_target, &config, test).unwrap().target_accuracy.unwrap();
    check(
        (full - half).abs() <= 0.05 && matches_count(half, PINNED_HALF_TARGET),
        format!("100% {:.2}, 50% {:.2}, margin {:.2} points", 100.0 * full, 100.0 * half, 100.0 * (full - half)),
    )
}

#[derive(Default)]
struct Recorder {
    classifiers: Vec<(BlockEvent, Vec<u64>)>,
    phis: Vec<(BlockEvent, Vec<u64>)>,
}

impl TrainObserver<f64> for Recorder {
    fn on_block(&mut self, _iter: usize, event: BlockEvent, classifier: &SoftmaxClassifier<f64>, phis: &[AlignmentMap<f64>]) {
        let theta = classifier.weights().iter().chain(classifier.bias().iter()).map(|v| v.to_bits()).collect();
        self.classifiers.push((event, theta));
        self.phis.push((event, phis.iter().flat_map(|p| p.phi().iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect()));
    }
}

/// True when every `start` snapshot equals the following `end` snapshot.
fn unchanged(items: &[(BlockEvent, Vec<u64>)], start: BlockEvent, end: BlockEvent) -> (usize, bool) {
    let mut blocks = 0;
    let mut same = true;
    for (i, (event, value)) in items.iter().enumerate() {
        if *event == start {
            let closing = items[i..].iter().find(|(e, _)| *e == end).expect("block closed");
            blocks += 1;
            same &= *value == closing.1;
        }
    }
    (blocks, same)
}

struct AuditedTarget {
    inner: FeatureDataset<f64>,
    reads: Cell<usize>,
}

impl FeatureSource<f64> for AuditedTarget {
    fn features(&self) -> ArrayView2<'_, f64> {
        self.reads.set(self.reads.get() + 1);
        self.inner.features()
    }

    fn labels(&self) -> Option<&[usize]> {
        self.reads.set(self.reads.get() + 1);
        self.inner.labels()
    }

    fn domain_tag(&self) -> &str {
        self.inner.domain_tag()
    }
}

fn frozen_contracts(inst: &ShiftInstance<f64>) -> Outcome {
    let config = TrainConfig { n_iter: 4, t1: 30, t2: 30, ..TrainConfig::default() };
    let mut rec = Recorder::default();
    let options = RunOptions { eval: None, bootstrap: BootstrapPlan::Independent, observer: Some(&mut rec) };
    run(&inst.source, &inst.target.without_labels(), &config, options).unwrap();
    let (aux_blocks, theta_frozen) = unchanged(&rec.classifiers, BlockEvent::AuxiliaryStart, BlockEvent::AuxiliaryEnd);
    let (primary_blocks, phi_frozen) = unchanged(&rec.phis, BlockEvent::PrimaryStart, BlockEvent::PrimaryEnd);

    let audited = AuditedTarget { inner: inst.target.clone(), reads: Cell::new(0) };
    train(&inst.source, &audited, &config.clone().with_mode(Mode::NoAdapt), None).unwrap();
    let a1_reads = audited.reads.get();
    check(
        aux_blocks == 4 && primary_blocks == 4 && theta_frozen && phi_frozen && a1_reads == 0,
        format!("Θ frozen over {aux_blocks} auxiliary blocks, Φ frozen over {primary_blocks} primary blocks, A1 target reads {a1_reads}"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(&SynthArgs {
        out_dir: dir.path().to_path_buf(),
        classes: None,
        dim: None,
        intrinsic_dim: None,
        samples_per_class: None,
        test_samples_per_class: None,
        angle: None,
        translation: None,
        sigma: None,
        in_plane_spread: None,
        class_separation: None,
        seed: None,
    })
    .unwrap();
    let mut reports = Vec::new();
    for name in ["first.json", "second.json"] {
        let out = dir.path().join(name);
        let data = DataArgs {
            source: dir.path().join("source.csv"),
            target: dir.path().join("target.csv"),
            test: Some(dir.path().join("test.csv")),
        };
        let run = RunArgs { data, train: TrainOverrides::default(), out: Some(out.clone()), format: ReportFormat::Json };
        cmd_adapt(&AdaptArgs { run }).unwrap();
        reports.push(fs::read(out).unwrap());
    }
    check(reports[0] == reports[1], format!("two cmd_adapt runs, {} bytes each, identical: {}", reports[0].len(), reports[0] == reports[1]))
}

fn loss_identities() -> Outcome {
    let mut worst = 0.0f64;
    for c in [2usize, 10, 65] {
        let uniform = Array2::from_elem((7, c), 1.0 / c as f64);
        let labels: Vec<usize> = (0..7).map(|i| (i * 3) % c).collect();
        let ln_c = (c as f64).ln();
        worst = worst.max((conditional_entropy(uniform.view()).unwrap() - ln_c).abs());
        worst = worst.max((cross_entropy(uniform.view(), &labels).unwrap() - ln_c).abs());
    }
    check(worst < 1e-12, format!("C ∈ {{2, 10, 65}}, max deviation from ln C {worst:.2e}"))
}

fn report(name: &str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let in_budget = budget.is_none_or(|b| elapsed <= b);
    let (ok, detail) = match outcome {
        Ok(d) => (in_budget, d),
        Err(d) => (false, d),
    };
    let budget_note = budget.map(|b| format!(", budget {}s", b.as_secs())).unwrap_or_default();
    println!("{} {name}: {detail} [{:.2}s{budget_note}]", if ok { "PASS" } else { "FAIL" }, elapsed.as_secs_f64());
    ok
}

fn main() -> ExitCode {
    println!(
        "NOTE benchmark accuracies on the published image benchmarks: not reproducible here, \
         they need external datasets and deep feature extractors; the property checks below stand in"
    );
    let inst = pinned();
    let results = [
        report("closed-form optimality", Some(Duration::from_secs(10)), closed_form_optimality),
        report("gradient correctness", Some(Duration::from_secs(5)), gradient_correctness),
        report("orthonormality and reconstruction", None, orthonormality_and_reconstruction),
        report("ablation ordering", Some(Duration::from_secs(60)), || ablation_ordering(&inst)),
        report("alignment dynamics", None, || phi_dynamics_check(&inst)),
        report("ensemble gain", None, || ensemble_gain(&inst)),
        report("reduced target data", None, || reduced_data(&inst)),
        report("frozen-parameter contracts", None, || frozen_contracts(&inst)),
        report("determinism", None, determinism),
        report("loss identities", None, loss_identities),
    ];
    let passed = results.iter().filter(|&&ok| ok).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
