//! The acceptance suite: every exit criterion implemented as a named
//! check. The `verify` CLI command runs these and prints one pass/fail
//! line per check; the acceptance integration tests call the same
//! functions.

use std::time::Instant;

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ablate::ablate;
use crate::data::make_toy_dataset;
use crate::error::{Error, Result};
use crate::image::{ImageTensor, ValueRange};
use crate::losses;
use crate::metrics;
use crate::networks::{
    build_discriminator, build_generator, conv_stack_output, receptive_field, DiscriminatorSpec,
    GeneratorSpec, NetworkProfile,
};
use crate::nn::{init_weights, Feat, InstanceNorm2d, Layer, Network, ParamKind, ResidualBlock};
use crate::presets::{preset, LossTerm, PresetName, TermSet};
use crate::trainer::{self, lr_at_epoch, train, TrainConfig, TrainState};

/// Outcome of one acceptance check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub group: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {}/{} ({:.2}s){}",
            if self.passed { "PASS" } else { "FAIL" },
            self.group,
            self.name,
            self.seconds,
            if self.detail.is_empty() {
                String::new()
            } else {
                format!(" — {}", self.detail)
            }
        )
    }
}

pub const GROUPS: [&str; 10] = [
    "losses",
    "gradients",
    "architecture",
    "schedule",
    "metric-consistency",
    "metric-axioms",
    "presets",
    "convergence",
    "determinism",
    "ablation",
];

/// Runs one group or, with `None`, the whole suite.
pub fn run(only: Option<&str>) -> Result<Vec<CheckResult>> {
    let groups: Vec<&str> = match only {
        Some(g) => {
            if !GROUPS.contains(&g) {
                return Err(Error::Config(format!(
                    "unknown verify group `{g}` (expected one of {})",
                    GROUPS.join(", ")
                )));
            }
            vec![g]
        }
        None => GROUPS.to_vec(),
    };
    let mut results = Vec::new();
    for group in groups {
        let checks = match group {
            "losses" => check_losses(),
            "gradients" => check_gradients(),
            "architecture" => check_architecture(),
            "schedule" => check_schedule(),
            "metric-consistency" => check_metric_consistency(),
            "metric-axioms" => check_metric_axioms(),
            "presets" => check_presets(),
            "convergence" => check_convergence(),
            "determinism" => check_determinism(),
            "ablation" => check_ablation(),
            _ => unreachable!(),
        };
        results.extend(checks);
    }
    Ok(results)
}

fn check(
    results: &mut Vec<CheckResult>,
    group: &'static str,
    name: &str,
    f: impl FnOnce() -> Result<(bool, String)>,
) {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok((ok, d)) => (ok, d),
        Err(e) => (false, format!("error: {e}")),
    };
    results.push(CheckResult {
        group,
        name: name.to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    });
}

// ---------------------------------------------------------------------
// criterion 1: loss-oracle equivalence
// ---------------------------------------------------------------------

/// Scalar-loop oracles, kept free of ndarray so they share nothing with
/// the implementation they check.
mod oracle {
    pub fn l1(x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..x.len() {
            let d = x[i] - y[i];
            acc += if d < 0.0 { -d } else { d };
        }
        acc / x.len() as f64
    }

    pub fn msq_to(m: &[f64], t: f64) -> f64 {
        let mut acc = 0.0;
        for &v in m {
            acc += (v - t) * (v - t);
        }
        acc / m.len() as f64
    }

    pub fn lsgan_d(real: &[f64], fake: &[f64]) -> f64 {
        msq_to(real, 1.0) + msq_to(fake, 0.0)
    }
}

fn random_feat(rng: &mut ChaCha8Rng, dim: (usize, usize, usize)) -> Feat {
    Array3::from_shape_fn(dim, |_| rng.gen_range(-2.0..2.0))
}

fn check_losses() -> Vec<CheckResult> {
    const GROUP: &str = "losses";
    let mut results = Vec::new();

    check(&mut results, GROUP, "ten-terms-vs-scalar-oracles-200-bundles", || {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let img_dim = (3, 4, 4);
        let map_dim = (1, 4, 4);
        let mut max_dev = 0.0f64;
        for _ in 0..200 {
            let real_a = random_feat(&mut rng, img_dim);
            let real_b = random_feat(&mut rng, img_dim);
            let syn_a = random_feat(&mut rng, img_dim);
            let syn_b = random_feat(&mut rng, img_dim);
            let cyc_a = random_feat(&mut rng, img_dim);
            let cyc_b = random_feat(&mut rng, img_dim);
            let d_a_real = random_feat(&mut rng, map_dim);
            let d_a_syn = random_feat(&mut rng, map_dim);
            let d_a_cyc = random_feat(&mut rng, map_dim);
            let d_b_real = random_feat(&mut rng, map_dim);
            let d_b_syn = random_feat(&mut rng, map_dim);
            let d_b_cyc = random_feat(&mut rng, map_dim);
            let s = |f: &Feat| f.as_slice().unwrap().to_vec();

            // generator-side adversarial pair (terms 1-2)
            let mut dev = (losses::lsgan_g_loss(&d_a_syn) - oracle::msq_to(&s(&d_a_syn), 1.0)).abs();
            dev = dev.max((losses::lsgan_g_loss(&d_b_syn) - oracle::msq_to(&s(&d_b_syn), 1.0)).abs());
            // discriminator-side adversarial
            dev = dev.max(
                (losses::lsgan_d_loss(&d_a_real, &d_a_syn)? - oracle::lsgan_d(&s(&d_a_real), &s(&d_a_syn))).abs(),
            );
            dev = dev.max(
                (losses::lsgan_d_loss(&d_b_real, &d_b_syn)? - oracle::lsgan_d(&s(&d_b_real), &s(&d_b_syn))).abs(),
            );
            // synthesized pair (3-4)
            let (sa, sb) = losses::synthesized_losses(&real_a, &syn_a, &real_b, &syn_b)?;
            dev = dev.max((sa - oracle::l1(&s(&real_a), &s(&syn_a))).abs());
            dev = dev.max((sb - oracle::l1(&s(&real_b), &s(&syn_b))).abs());
            // cycle pair (5-6)
            let (ca, cb) = losses::cycle_losses(&real_a, &cyc_a, &real_b, &cyc_b)?;
            dev = dev.max((ca - oracle::l1(&s(&real_a), &s(&cyc_a))).abs());
            dev = dev.max((cb - oracle::l1(&s(&real_b), &s(&cyc_b))).abs());
            // cyclic-synthesized pair (7-8)
            let (xa, xb) = losses::cyclic_synthesized_losses(&syn_a, &cyc_a, &syn_b, &cyc_b)?;
            dev = dev.max((xa - oracle::l1(&s(&syn_a), &s(&cyc_a))).abs());
            dev = dev.max((xb - oracle::l1(&s(&syn_b), &s(&cyc_b))).abs());
            // cyclic-discriminative pair (9-10)
            dev = dev.max(
                (losses::cd_d_loss(&d_a_real, &d_a_cyc)? - oracle::lsgan_d(&s(&d_a_real), &s(&d_a_cyc))).abs(),
            );
            dev = dev.max((losses::cd_g_loss(&d_b_cyc) - oracle::msq_to(&s(&d_b_cyc), 1.0)).abs());
            max_dev = max_dev.max(dev);
        }
        Ok((max_dev < 1e-9, format!("max |dev| = {max_dev:.2e} over 200 bundles")))
    });

    check(&mut results, GROUP, "composite-unit-terms-total-114", || {
        let ones = Array3::from_elem((1, 2, 2), 1.0);
        let zeros = Array3::from_elem((1, 2, 2), 0.0);
        let alternating = Array3::from_shape_vec((1, 2, 2), vec![2.0, 0.0, 2.0, 0.0]).unwrap();
        let bundle = losses::ForwardBundle {
            real_a: Some(&ones),
            real_b: Some(&ones),
            syn_a: Some(&zeros),
            syn_b: Some(&zeros),
            cyc_a: Some(&alternating),
            cyc_b: Some(&alternating),
            d_a_real: Some(&zeros),
            d_a_syn: Some(&zeros),
            d_a_cyc: Some(&zeros),
            d_b_real: Some(&zeros),
            d_b_syn: Some(&zeros),
            d_b_cyc: Some(&zeros),
        };
        let report = losses::total_objective(&preset(PresetName::CdGan), &bundle)?;
        let ok = (report.total_generator - 114.0).abs() < 1e-9
            && LossTerm::ALL.iter().all(|t| (report.term(*t) - 1.0).abs() < 1e-12);
        Ok((ok, format!("total_generator = {}", report.total_generator)))
    });

    results
}

// ---------------------------------------------------------------------
// criterion 2: gradient verification
// ---------------------------------------------------------------------

const FD_STEP: f64 = 1e-5;
const GRAD_RTOL: f64 = 1e-3;
/// Absolute floor for gradient agreement. Structurally flat parameters
/// (a bias feeding an instance norm, a norm scale under a sum objective)
/// have an exact-zero analytic gradient while central differences sit on
/// a ~1e-9 cancellation-noise floor; comparing those by pure ratio is
/// meaningless. Well above the noise floor, far below any real gradient.
const GRAD_ATOL: f64 = 1e-6;

/// Mismatch scaled by the allowed tolerance: <= 1 means the pair agrees
/// within atol + rtol * magnitude.
fn tolerance_ratio(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    diff / (GRAD_ATOL + GRAD_RTOL * analytic.abs().max(numeric.abs()))
}

fn add_to_param_element(net: &mut Network, global_idx: usize, delta: f64) {
    let mut offset = 0usize;
    net.visit_params(&mut |mut p| {
        let len = p.value.len();
        if global_idx >= offset && global_idx < offset + len {
            if let Some(v) = p.value.iter_mut().nth(global_idx - offset) {
                *v += delta;
            }
        }
        offset += len;
    });
}

fn flat_grads(net: &mut Network) -> Vec<f64> {
    let mut grads = Vec::new();
    net.visit_params(&mut |p| grads.extend(p.grad.iter().copied()));
    grads
}

/// FD check of d(sum(net(x)))/d(theta) on `probes` randomly selected
/// parameters. Returns (checked, max relative error).
pub fn network_sum_grad_check(net: &mut Network, x: &Feat, probes: usize, seed: u64) -> Result<(usize, f64)> {
    let (y, tape) = net.forward(x)?;
    net.zero_grad();
    let ones = Feat::ones(y.dim());
    net.backward(&tape, &ones)?;
    let analytic = flat_grads(net);
    let total = analytic.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = probes.min(total);
    let mut max_err = 0.0f64;
    for _ in 0..count {
        let idx = rng.gen_range(0..total);
        add_to_param_element(net, idx, FD_STEP);
        let up: f64 = net.infer(x)?.sum();
        add_to_param_element(net, idx, -2.0 * FD_STEP);
        let down: f64 = net.infer(x)?.sum();
        add_to_param_element(net, idx, FD_STEP);
        let numeric = (up - down) / (2.0 * FD_STEP);
        max_err = max_err.max(tolerance_ratio(analytic[idx], numeric));
    }
    Ok((count, max_err))
}

/// FD check of a scalar loss with respect to one input tensor.
fn input_grad_check(
    loss: impl Fn(&Feat) -> Result<f64>,
    analytic: &Feat,
    x: &Feat,
    probes: usize,
    seed: u64,
) -> Result<(usize, f64)> {
    let total = x.len();
    let count = probes.min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = x.clone();
    let mut max_err = 0.0f64;
    for _ in 0..count {
        let idx = rng.gen_range(0..total);
        let flat = probe.as_slice_mut().unwrap();
        let orig = flat[idx];
        flat[idx] = orig + FD_STEP;
        let up = loss(&probe)?;
        probe.as_slice_mut().unwrap()[idx] = orig - FD_STEP;
        let down = loss(&probe)?;
        probe.as_slice_mut().unwrap()[idx] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        max_err = max_err.max(tolerance_ratio(analytic.as_slice().unwrap()[idx], numeric));
    }
    Ok((count, max_err))
}

fn randomize_params(net: &mut Network, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    net.visit_params(&mut |mut p| {
        for v in p.value.iter_mut() {
            *v = match p.kind {
                ParamKind::NormScale => 1.0 + rng.gen_range(-0.3..0.3),
                _ => rng.gen_range(-scale..scale),
            };
        }
    });
}

fn check_gradients() -> Vec<CheckResult> {
    const GROUP: &str = "gradients";
    let mut results = Vec::new();

    check(&mut results, GROUP, "loss-input-gradients", || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dim = (3, 5, 4); // 60 elements per tensor
        let x = random_feat(&mut rng, dim);
        let y = random_feat(&mut rng, dim);
        let mut worst = 0.0f64;
        let mut checked = 0usize;

        // every L1 family member reduces to l1_loss on its argument pair
        let analytic = losses::l1_loss_grad(&x, &y)?;
        let (n, e) = input_grad_check(|p| losses::l1_loss(p, &y), &analytic, &x, 60, 1)?;
        checked += n;
        worst = worst.max(e);
        // gradient with respect to the second argument is the negation
        let analytic = losses::l1_loss_grad(&y, &x)?;
        let (n, e) = input_grad_check(|p| losses::l1_loss(&x, p), &analytic, &y, 60, 2)?;
        checked += n;
        worst = worst.max(e);
        // adversarial splits
        let analytic = losses::mean_square_to_grad(&x, 1.0);
        let (n, e) = input_grad_check(|p| Ok(losses::lsgan_g_loss(p)), &analytic, &x, 60, 3)?;
        checked += n;
        worst = worst.max(e);
        let analytic = losses::mean_square_to_grad(&x, 0.0);
        let (n, e) = input_grad_check(|p| losses::lsgan_d_loss(&y, p), &analytic, &x, 60, 4)?;
        checked += n;
        worst = worst.max(e);
        let analytic = losses::mean_square_to_grad(&x, 1.0);
        let (n, e) = input_grad_check(|p| losses::cd_d_loss(p, &y), &analytic, &x, 60, 5)?;
        checked += n;
        worst = worst.max(e);
        let analytic = losses::mean_square_to_grad(&x, 1.0);
        let (n, e) = input_grad_check(|p| Ok(losses::cd_g_loss(p)), &analytic, &x, 60, 6)?;
        checked += n;
        worst = worst.max(e);

        Ok((worst <= 1.0, format!("{checked} probes, worst mismatch {worst:.3} of tolerance")))
    });

    check(&mut results, GROUP, "instance-norm-parameters", || {
        let mut net = Network::new(vec![(
            "norm".into(),
            Box::new(InstanceNorm2d::new(32)) as Box<dyn Layer>,
        )]);
        randomize_params(&mut net, 11, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random_feat(&mut rng, (32, 6, 6));
        let (n, e) = network_sum_grad_check(&mut net, &x, 64, 13)?;
        Ok((n >= 50 && e <= 1.0, format!("{n} probes, worst mismatch {e:.3} of tolerance")))
    });

    check(&mut results, GROUP, "residual-block-parameters", || {
        let mut net = Network::new(vec![(
            "rb".into(),
            Box::new(ResidualBlock::new(8)) as Box<dyn Layer>,
        )]);
        init_weights(&mut net, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = random_feat(&mut rng, (8, 6, 6));
        let (n, e) = network_sum_grad_check(&mut net, &x, 60, 23)?;
        Ok((n >= 50 && e <= 1.0, format!("{n} probes, worst mismatch {e:.3} of tolerance")))
    });

    check(&mut results, GROUP, "test-profile-generator-parameters", || {
        let mut gen = build_generator(&GeneratorSpec::standard(NetworkProfile::Test), 31)?;
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let x = random_feat(&mut rng, (3, 8, 8)).mapv(|v| v * 0.5);
        let (n, e) = network_sum_grad_check(gen.net_mut(), &x, 60, 33)?;
        Ok((n >= 50 && e <= 1.0, format!("{n} probes, worst mismatch {e:.3} of tolerance")))
    });

    check(&mut results, GROUP, "test-profile-discriminator-parameters", || {
        let mut disc = build_discriminator(&DiscriminatorSpec::standard(NetworkProfile::Test), 41)?;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = random_feat(&mut rng, (3, 32, 32)).mapv(|v| v * 0.5);
        let (n, e) = network_sum_grad_check(disc.net_mut(), &x, 60, 43)?;
        Ok((n >= 50 && e <= 1.0, format!("{n} probes, worst mismatch {e:.3} of tolerance")))
    });

    check(&mut results, GROUP, "combined-objective-end-to-end", || {
        let (n, e) = end_to_end_generator_grad_check(24)?;
        Ok((e <= 1.0, format!("{n} probes, worst mismatch {e:.3} of tolerance")))
    });

    results
}

/// FD check of the full generator objective (all ten terms, both
/// generators, gradients flowing through both discriminators) against the
/// accumulated analytic gradients of one optimization step.
pub fn end_to_end_generator_grad_check(probes: usize) -> Result<(usize, f64)> {
    let cfg = TrainConfig {
        preset: PresetName::CdGan,
        epochs_total: 1,
        epochs_constant_lr: 1,
        seed: 51,
        ..TrainConfig::default()
    };
    let pair = &make_toy_dataset(1, 32, 52)?[0];
    // h well below the default step: the L1 terms average |x - y| over
    // thousands of elements, and a larger probe step makes sign flips at
    // near-ties likely; 1e-7 keeps the cancellation noise two decades
    // under the absolute tolerance while making flips very rare.
    debug_e2e_grad_check(&cfg, pair, probes, 1e-7)
}

/// Parameterized form of the end-to-end check, exposed for diagnostics.
pub fn debug_e2e_grad_check(
    cfg: &TrainConfig,
    pair: &crate::image::PairedSample,
    probes: usize,
    h: f64,
) -> Result<(usize, f64)> {
    let mut state = TrainState::new(cfg)?;
    let ctx = trainer::StepContext::prepare(&state, pair, cfg)?;
    trainer::accumulate_generator_gradients(&mut state, &ctx, cfg)?;
    let analytic_ab = flat_grads(state.g_ab.net_mut());
    let analytic_ba = flat_grads(state.g_ba.net_mut());

    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let mut max_err = 0.0f64;
    let mut total_probes = 0usize;
    for which in [0usize, 1] {
        let analytic = if which == 0 { &analytic_ab } else { &analytic_ba };
        for _ in 0..probes / 2 {
            let idx = rng.gen_range(0..analytic.len());
            let probe = |state: &mut TrainState, delta: f64| {
                let net = if which == 0 {
                    state.g_ab.net_mut()
                } else {
                    state.g_ba.net_mut()
                };
                add_to_param_element(net, idx, delta);
            };
            probe(&mut state, h);
            let up = trainer::StepContext::prepare(&state, pair, cfg)?.report.total_generator;
            probe(&mut state, -2.0 * h);
            let down = trainer::StepContext::prepare(&state, pair, cfg)?.report.total_generator;
            probe(&mut state, h);
            let numeric = (up - down) / (2.0 * h);
            max_err = max_err.max(tolerance_ratio(analytic[idx], numeric));
            total_probes += 1;
        }
    }
    Ok((total_probes, max_err))
}

// ---------------------------------------------------------------------
// criterion 3: architecture checks
// ---------------------------------------------------------------------

fn check_architecture() -> Vec<CheckResult> {
    const GROUP: &str = "architecture";
    let mut results = Vec::new();

    check(&mut results, GROUP, "full-generator-256-shape-and-range", || {
        let gen = build_generator(&GeneratorSpec::standard(NetworkProfile::Full), 61)?;
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let x = Array3::from_shape_fn((3, 256, 256), |_| rng.gen_range(-1.0..1.0));
        let y = gen.infer(&x)?;
        let shape_ok = y.dim() == (3, 256, 256);
        let range_ok = y.iter().all(|&v| (-1.0..=1.0).contains(&v));
        Ok((shape_ok && range_ok, format!("output {:?}", y.dim())))
    });

    check(&mut results, GROUP, "full-discriminator-256-to-30x30", || {
        let disc = build_discriminator(&DiscriminatorSpec::standard(NetworkProfile::Full), 63)?;
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let x = Array3::from_shape_fn((3, 256, 256), |_| rng.gen_range(-1.0..1.0));
        let y = disc.infer(&x)?;
        // independent conv-arithmetic route must agree with the forward pass
        let arith = conv_stack_output(&DiscriminatorSpec::standard(NetworkProfile::Full), 256, 256);
        let ok = y.dim() == (1, 30, 30) && arith == Some((30, 30));
        Ok((ok, format!("output {:?}, arithmetic {:?}", y.dim(), arith)))
    });

    check(&mut results, GROUP, "receptive-field-70", || {
        let rf = receptive_field(&DiscriminatorSpec::standard(NetworkProfile::Full));
        Ok((rf == 70, format!("receptive field {rf}")))
    });

    check(&mut results, GROUP, "init-statistics", || {
        let mut gen = build_generator(&GeneratorSpec::standard(NetworkProfile::Full), 65)?;
        let mut weights = Vec::new();
        gen.net_mut().visit_params(&mut |p| {
            if p.kind == ParamKind::ConvWeight {
                weights.extend(p.value.iter().copied());
            }
        });
        let n = weights.len();
        let mean = weights.iter().sum::<f64>() / n as f64;
        let std = (weights.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / n as f64).sqrt();
        let ok = n >= 100_000 && mean.abs() < 1e-3 && (0.019..=0.021).contains(&std);
        Ok((ok, format!("{n} weights, mean {mean:.2e}, std {std:.5}")))
    });

    results
}

// ---------------------------------------------------------------------
// criterion 4: schedule exactness
// ---------------------------------------------------------------------

fn check_schedule() -> Vec<CheckResult> {
    const GROUP: &str = "schedule";
    let mut results = Vec::new();

    check(&mut results, GROUP, "constant-then-linear-decay", || {
        let cfg = TrainConfig::default();
        let mut worst = 0.0f64;
        for epoch in 0..100 {
            worst = worst.max((lr_at_epoch(&cfg, epoch)? - 2e-4).abs());
        }
        for epoch in 100..=200 {
            let expect = 2e-4 * (200 - epoch) as f64 / 100.0;
            worst = worst.max((lr_at_epoch(&cfg, epoch)? - expect).abs());
        }
        let anchors_ok = (lr_at_epoch(&cfg, 150)? - 1e-4).abs() < 1e-12
            && lr_at_epoch(&cfg, 200)?.abs() < 1e-12;
        Ok((worst < 1e-12 && anchors_ok, format!("max |dev| = {worst:.2e}")))
    });

    results
}

// ---------------------------------------------------------------------
// criterion 5: reported-score consistency
// ---------------------------------------------------------------------

fn check_metric_consistency() -> Vec<CheckResult> {
    const GROUP: &str = "metric-consistency";
    let mut results = Vec::new();

    check(&mut results, GROUP, "mse-to-psnr-21-cells", || {
        let devs = metrics::psnr_consistency_deviations();
        let worst = devs.iter().map(|(_, _, d)| *d).fold(0.0f64, f64::max);
        let spot = devs
            .iter()
            .find(|(c, _, _)| c.dataset == "cuhk" && c.method == "gan")
            .map(|(_, computed, _)| (computed - 28.36).abs() < 5e-3)
            .unwrap_or(false);
        let spot2 = devs
            .iter()
            .find(|(c, _, _)| c.dataset == "cuhk" && c.method == "cdgan")
            .map(|(_, computed, _)| (computed - 28.94).abs() < 5e-3)
            .unwrap_or(false);
        Ok((
            worst < 0.15 && spot && spot2,
            format!("worst deviation {worst:.4} dB over {} cells", devs.len()),
        ))
    });

    results
}

// ---------------------------------------------------------------------
// criterion 6: metric axioms
// ---------------------------------------------------------------------

fn byte_image(data: Array3<f64>) -> Result<ImageTensor> {
    ImageTensor::new(data, ValueRange::Byte)
}

fn check_metric_axioms() -> Vec<CheckResult> {
    const GROUP: &str = "metric-axioms";
    let mut results = Vec::new();

    check(&mut results, GROUP, "identity-and-symmetry", || {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let x = byte_image(Array3::from_shape_fn((3, 16, 16), |_| rng.gen_range(0.0..255.0)))?;
        let y = byte_image(Array3::from_shape_fn((3, 16, 16), |_| rng.gen_range(0.0..255.0)))?;
        let backbone = metrics::RandomStackBackbone::new(72);
        let ok = (metrics::ssim(&x, &x)? - 1.0).abs() < 1e-12
            && metrics::mse(&x, &x)? == 0.0
            && metrics::lpips(&x, &x, &backbone)?.abs() < 1e-12
            && (metrics::ssim(&x, &y)? - metrics::ssim(&y, &x)?).abs() < 1e-9;
        Ok((ok, String::new()))
    });

    check(&mut results, GROUP, "psnr-strictly-decreasing-in-mse", || {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let mut pairs = Vec::new();
        for _ in 0..12 {
            let x = byte_image(Array3::from_shape_fn((3, 8, 8), |_| rng.gen_range(0.0..255.0)))?;
            let y = byte_image(Array3::from_shape_fn((3, 8, 8), |_| rng.gen_range(0.0..255.0)))?;
            pairs.push((metrics::mse(&x, &y)?, metrics::psnr(&x, &y)?));
        }
        let mut ok = true;
        for i in 0..pairs.len() {
            for j in 0..pairs.len() {
                if pairs[i].0 < pairs[j].0 && pairs[i].1 <= pairs[j].1 {
                    ok = false;
                }
            }
        }
        Ok((ok, format!("{} random pairs", pairs.len())))
    });

    check(&mut results, GROUP, "anti-correlated-ssim-negative", || {
        let x = byte_image(Array3::from_shape_fn((1, 16, 16), |(_, i, j)| {
            if (i + j) % 2 == 0 {
                178.0
            } else {
                78.0
            }
        }))?;
        let y = byte_image(x.data().mapv(|v| (256.0 - v).min(255.0)))?;
        let s = metrics::ssim(&x, &y)?;
        Ok((s < 0.0, format!("ssim = {s:.4}")))
    });

    results
}

// ---------------------------------------------------------------------
// criterion 7: preset fidelity
// ---------------------------------------------------------------------

fn check_presets() -> Vec<CheckResult> {
    const GROUP: &str = "presets";
    let mut results = Vec::new();

    check(&mut results, GROUP, "seven-method-term-matrix", || {
        let expected: [(PresetName, [bool; 10]); 7] = [
            (PresetName::Gan, [true, true, false, false, false, false, false, false, false, false]),
            (PresetName::Pix2Pix, [true, true, true, true, false, false, false, false, false, false]),
            (PresetName::DualGan, [true, true, false, false, true, true, false, false, false, false]),
            (PresetName::CycleGan, [true, true, false, false, true, true, false, false, false, false]),
            (PresetName::Ps2Gan, [true, true, true, true, true, true, false, false, false, false]),
            (PresetName::CsGan, [true, true, false, false, true, true, true, true, false, false]),
            (PresetName::CdGan, [true, true, true, true, true, true, true, true, true, true]),
        ];
        for (name, matrix) in expected {
            if preset(name).terms.as_bools() != matrix {
                return Ok((false, format!("matrix mismatch for {name}")));
            }
        }
        Ok((true, "7 x 10 presence matrix reproduced".into()))
    });

    check(&mut results, GROUP, "plus-presets-add-cd-pair", || {
        let cd = TermSet::of(&[LossTerm::CdA, LossTerm::CdB]);
        for name in [
            PresetName::DualGanPlus,
            PresetName::CycleGanPlus,
            PresetName::Ps2GanPlus,
            PresetName::CsGanPlus,
        ] {
            let base = preset(name.base().unwrap());
            if preset(name).terms != base.terms.union(cd) {
                return Ok((false, format!("{name} != base + cd pair")));
            }
        }
        Ok((true, String::new()))
    });

    results
}

// ---------------------------------------------------------------------
// criterion 8: toy end-to-end convergence
// ---------------------------------------------------------------------

fn mean_syn_b_l1(state: &TrainState, pairs: &[crate::image::PairedSample]) -> Result<f64> {
    let mut acc = 0.0;
    for pair in pairs {
        let syn_b = state.g_ab.infer(pair.image_a.data())?;
        acc += losses::l1_loss(&syn_b, pair.image_b.data())?;
    }
    Ok(acc / pairs.len() as f64)
}

fn check_convergence() -> Vec<CheckResult> {
    const GROUP: &str = "convergence";
    let mut results = Vec::new();

    check(&mut results, GROUP, "toy-cdgan-5-epochs", || {
        let cfg = TrainConfig {
            preset: PresetName::CdGan,
            epochs_total: 5,
            epochs_constant_lr: 5,
            seed: 23,
            profile: NetworkProfile::Test,
            ..TrainConfig::default()
        };
        let train_set = make_toy_dataset(64, 64, 82)?;
        let held_out = make_toy_dataset(16, 64, 83)?;

        let untrained = TrainState::new(&cfg)?;
        let untrained_l1 = mean_syn_b_l1(&untrained, &held_out)?;

        let (state, log) = train(&cfg, &train_set, None)?;
        if log.len() != 64 * 5 {
            return Ok((false, format!("{} steps logged, expected 320", log.len())));
        }
        let epoch_mean = |e: usize| {
            let vals: Vec<f64> = log
                .iter()
                .filter(|r| r.epoch == e)
                .map(|r| r.report.total_generator)
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let first = epoch_mean(0);
        let fifth = epoch_mean(4);
        let trained_l1 = mean_syn_b_l1(&state, &held_out)?;
        let ratio = fifth / first;
        let ok = fifth <= 0.7 * first && trained_l1 < untrained_l1;
        Ok((
            ok,
            format!(
                "epoch means {first:.3} -> {fifth:.3} (ratio {ratio:.3}); held-out L1 {untrained_l1:.4} -> {trained_l1:.4}"
            ),
        ))
    });

    results
}

// ---------------------------------------------------------------------
// criterion 9: determinism & resume
// ---------------------------------------------------------------------

fn log_lines(log: &[trainer::LogRecord]) -> Vec<String> {
    log.iter()
        .map(|r| r.report.log_line(r.step, r.epoch, r.lr))
        .collect()
}

fn check_determinism() -> Vec<CheckResult> {
    const GROUP: &str = "determinism";
    let mut results = Vec::new();

    let small_cfg = |epochs: usize| TrainConfig {
        preset: PresetName::CdGan,
        epochs_total: epochs,
        epochs_constant_lr: epochs,
        seed: 91,
        profile: NetworkProfile::Test,
        ..TrainConfig::default()
    };

    check(&mut results, GROUP, "identical-runs-identical-logs", || {
        let cfg = small_cfg(2);
        let pairs = make_toy_dataset(4, 32, 92)?;
        let (_, log1) = train(&cfg, &pairs, None)?;
        let (_, log2) = train(&cfg, &pairs, None)?;
        let ok = log_lines(&log1) == log_lines(&log2);
        Ok((ok, format!("{} steps compared", log1.len())))
    });

    check(&mut results, GROUP, "checkpoint-resume-reproduces-next-steps", || {
        let pairs = make_toy_dataset(4, 32, 92)?;
        // uninterrupted 2-epoch run
        let (_, full_log) = train(&small_cfg(2), &pairs, None)?;
        // interrupted: 1 epoch, checkpoint, resume to 2
        let dir = tempfile::tempdir()?;
        let cfg1 = TrainConfig {
            checkpoint_every: 1,
            ..small_cfg(1)
        };
        let run_root = dir.path().join("run");
        train(&cfg1, &pairs, Some(&run_root))?;
        let ckpt = run_root.join("checkpoints").join("epoch_0001.ckpt");
        // continue with the target epoch count
        let (mut state, cfg_loaded) = TrainState::load(&ckpt)?;
        let cfg2 = TrainConfig {
            epochs_total: 2,
            epochs_constant_lr: 2,
            ..cfg_loaded
        };
        let resumed_log = trainer::train_loop(&mut state, &cfg2, &pairs, None)?;
        let full_tail: Vec<String> = log_lines(&full_log)
            .into_iter()
            .skip(full_log.len() - resumed_log.len())
            .collect();
        let ok = log_lines(&resumed_log) == full_tail;
        Ok((ok, format!("{} resumed steps match", resumed_log.len())))
    });

    results
}

// ---------------------------------------------------------------------
// criterion 10: ablation harness
// ---------------------------------------------------------------------

fn check_ablation() -> Vec<CheckResult> {
    const GROUP: &str = "ablation";
    let mut results = Vec::new();

    check(&mut results, GROUP, "nine-configuration-sweep", || {
        let cfg = TrainConfig {
            epochs_total: 1,
            epochs_constant_lr: 1,
            seed: 95,
            profile: NetworkProfile::Test,
            ..TrainConfig::default()
        };
        let train_set = make_toy_dataset(4, 32, 96)?;
        let test_set = make_toy_dataset(3, 32, 97)?;
        let table = ablate(&cfg, &train_set, &test_set, None, false)?;
        if table.columns.len() != 9 {
            return Ok((false, format!("{} columns", table.columns.len())));
        }
        // header row carries exactly 9 configuration columns
        let tsv = table.to_tsv();
        let header_cols = tsv.lines().next().map(|l| l.split('\t').count()).unwrap_or(0);
        if header_cols != 10 {
            return Ok((false, format!("table header has {header_cols} fields")));
        }
        // each "+" column's configuration differs from its base only by
        // the CD pair, and the CD terms actually engage during training
        let cd = TermSet::of(&[LossTerm::CdA, LossTerm::CdB]);
        for pair in PresetName::ABLATION.chunks(2).take(4) {
            let (base_name, plus_name) = (pair[0], pair[1]);
            if preset(plus_name).terms != preset(base_name).terms.union(cd) {
                return Ok((false, format!("{plus_name} config mismatch")));
            }
            let base_col = table.columns.iter().find(|c| c.preset == base_name).unwrap();
            let plus_col = table.columns.iter().find(|c| c.preset == plus_name).unwrap();
            if base_col.mean_cd_generator != 0.0 {
                return Ok((false, format!("{base_name} trained with CD terms active")));
            }
            if plus_col.mean_cd_generator <= 0.0 {
                return Ok((false, format!("{plus_name} never engaged the CD terms")));
            }
        }
        Ok((true, "9 columns, + variants differ only by CD activation".into()))
    });

    results
}
