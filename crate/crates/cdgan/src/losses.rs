//! The ten loss terms as pure functions of network outputs, plus the
//! combined objective under any preset.
//!
//! Every loss reduces by MEAN over elements so the weights stay scale-free
//! with respect to image and patch-map size. Adversarial objectives follow
//! the least-squares convention split into a discriminator part (real -> 1,
//! generated -> 0) and a generator part (generated -> 1). The
//! cyclic-discriminative pair applies the same split with the CYCLED image
//! in the fake role, and contributes to both generator and discriminator
//! updates.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::Feat;
use crate::presets::{LossPreset, LossTerm};

fn check_same_shape(context: &str, x: &Feat, y: &Feat) -> Result<()> {
    if x.dim() != y.dim() {
        let (a, b, c) = x.dim();
        let (d, e, f) = y.dim();
        return Err(Error::shape_mismatch(context, &[a, b, c], &[d, e, f]));
    }
    Ok(())
}

/// mean((map - target)^2), the least-squares core shared by all four
/// adversarial losses.
pub fn mean_square_to(map: &Feat, target: f64) -> f64 {
    let n = map.len() as f64;
    map.iter().map(|&v| (v - target) * (v - target)).sum::<f64>() / n
}

/// Gradient of [`mean_square_to`] with respect to the map: 2(map-t)/n.
pub fn mean_square_to_grad(map: &Feat, target: f64) -> Feat {
    let n = map.len() as f64;
    map.mapv(|v| 2.0 * (v - target) / n)
}

/// Discriminator side of the least-squares adversarial loss:
/// mean((d_real - 1)^2) + mean(d_fake^2).
pub fn lsgan_d_loss(d_real: &Feat, d_fake: &Feat) -> Result<f64> {
    check_same_shape("lsgan_d_loss patch maps", d_real, d_fake)?;
    Ok(mean_square_to(d_real, 1.0) + mean_square_to(d_fake, 0.0))
}

/// Generator side of the least-squares adversarial loss:
/// mean((d_fake - 1)^2).
pub fn lsgan_g_loss(d_fake: &Feat) -> f64 {
    mean_square_to(d_fake, 1.0)
}

/// Discriminator side of the cyclic-discriminative adversarial loss; the
/// cycled image plays the fake role.
pub fn cd_d_loss(d_real: &Feat, d_cycled: &Feat) -> Result<f64> {
    check_same_shape("cd_d_loss patch maps", d_real, d_cycled)?;
    Ok(mean_square_to(d_real, 1.0) + mean_square_to(d_cycled, 0.0))
}

/// Generator side of the cyclic-discriminative adversarial loss.
pub fn cd_g_loss(d_cycled: &Feat) -> f64 {
    mean_square_to(d_cycled, 1.0)
}

/// mean(|x - y|).
pub fn l1_loss(x: &Feat, y: &Feat) -> Result<f64> {
    check_same_shape("l1_loss", x, y)?;
    let n = x.len() as f64;
    Ok(x.iter().zip(y.iter()).map(|(&a, &b)| (a - b).abs()).sum::<f64>() / n)
}

/// Gradient of [`l1_loss`] with respect to `x`: sign(x-y)/n. The gradient
/// with respect to `y` is its negation.
pub fn l1_loss_grad(x: &Feat, y: &Feat) -> Result<Feat> {
    check_same_shape("l1_loss_grad", x, y)?;
    let n = x.len() as f64;
    let mut g = Feat::zeros(x.dim());
    for ((gv, &a), &b) in g.iter_mut().zip(x.iter()).zip(y.iter()) {
        *gv = (a - b).signum_or_zero() / n;
    }
    Ok(g)
}

trait SignumOrZero {
    fn signum_or_zero(self) -> f64;
}

impl SignumOrZero for f64 {
    fn signum_or_zero(self) -> f64 {
        if self > 0.0 {
            1.0
        } else if self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

/// L1 between real and synthesized images, per domain.
pub fn synthesized_losses(real_a: &Feat, syn_a: &Feat, real_b: &Feat, syn_b: &Feat) -> Result<(f64, f64)> {
    Ok((l1_loss(real_a, syn_a)?, l1_loss(real_b, syn_b)?))
}

/// L1 between real and cycled images, per domain.
pub fn cycle_losses(real_a: &Feat, cyc_a: &Feat, real_b: &Feat, cyc_b: &Feat) -> Result<(f64, f64)> {
    Ok((l1_loss(real_a, cyc_a)?, l1_loss(real_b, cyc_b)?))
}

/// L1 between synthesized and cycled images, per domain.
pub fn cyclic_synthesized_losses(syn_a: &Feat, cyc_a: &Feat, syn_b: &Feat, cyc_b: &Feat) -> Result<(f64, f64)> {
    Ok((l1_loss(syn_a, cyc_a)?, l1_loss(syn_b, cyc_b)?))
}

/// Everything one optimization step produced for a single sample. Fields
/// a preset does not need may be left unset.
#[derive(Default)]
pub struct ForwardBundle<'a> {
    pub real_a: Option<&'a Feat>,
    pub real_b: Option<&'a Feat>,
    pub syn_a: Option<&'a Feat>,
    pub syn_b: Option<&'a Feat>,
    pub cyc_a: Option<&'a Feat>,
    pub cyc_b: Option<&'a Feat>,
    pub d_a_real: Option<&'a Feat>,
    pub d_a_syn: Option<&'a Feat>,
    pub d_a_cyc: Option<&'a Feat>,
    pub d_b_real: Option<&'a Feat>,
    pub d_b_syn: Option<&'a Feat>,
    pub d_b_cyc: Option<&'a Feat>,
}

impl<'a> ForwardBundle<'a> {
    fn need(&self, term: LossTerm, input: &'static str) -> Result<&'a Feat> {
        let field = match input {
            "real_a" => self.real_a,
            "real_b" => self.real_b,
            "syn_a" => self.syn_a,
            "syn_b" => self.syn_b,
            "cyc_a" => self.cyc_a,
            "cyc_b" => self.cyc_b,
            "d_a_real" => self.d_a_real,
            "d_a_syn" => self.d_a_syn,
            "d_a_cyc" => self.d_a_cyc,
            "d_b_real" => self.d_b_real,
            "d_b_syn" => self.d_b_syn,
            "d_b_cyc" => self.d_b_cyc,
            _ => unreachable!("unknown bundle field"),
        };
        field.ok_or(Error::MissingLossInput {
            term: term.label(),
            input,
        })
    }
}

/// Per-term values and the three update totals for one sample.
///
/// The per-term map stores generator-side values for the adversarial and
/// cyclic-discriminative terms; the discriminator sides appear in the
/// per-network totals. Inactive terms are reported as zero and excluded
/// from every total.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub terms: BTreeMap<LossTerm, f64>,
    pub total_generator: f64,
    pub total_discriminator_a: f64,
    pub total_discriminator_b: f64,
}

impl LossReport {
    pub fn term(&self, t: LossTerm) -> f64 {
        self.terms.get(&t).copied().unwrap_or(0.0)
    }

    /// Header of the tab-separated training log.
    pub fn log_header() -> String {
        let mut cols = vec!["step".to_string(), "epoch".to_string(), "lr".to_string()];
        cols.extend(LossTerm::ALL.iter().map(|t| t.label().to_string()));
        cols.extend(["total_g", "total_d_a", "total_d_b"].map(String::from));
        cols.join("\t")
    }

    /// One log line; pairs with [`LossReport::log_header`].
    pub fn log_line(&self, step: u64, epoch: usize, lr: f64) -> String {
        let mut cols = vec![step.to_string(), epoch.to_string(), format!("{lr:.12e}")];
        cols.extend(LossTerm::ALL.iter().map(|t| format!("{:.12e}", self.term(*t))));
        cols.push(format!("{:.12e}", self.total_generator));
        cols.push(format!("{:.12e}", self.total_discriminator_a));
        cols.push(format!("{:.12e}", self.total_discriminator_b));
        cols.join("\t")
    }
}

/// Evaluates every active term of `preset` on a forward bundle and
/// combines them: generator total with weights (mu, lambda, omega) on the
/// L1 families, adversarial and cyclic-discriminative terms unweighted;
/// discriminator totals summing the least-squares parts per domain.
pub fn total_objective(preset: &LossPreset, bundle: &ForwardBundle<'_>) -> Result<LossReport> {
    use LossTerm::*;
    let w = &preset.weights;
    let mut terms = BTreeMap::new();
    let mut total_generator = 0.0;
    let mut total_d_a = 0.0;
    let mut total_d_b = 0.0;

    let record = |terms: &mut BTreeMap<LossTerm, f64>, term: LossTerm, value: f64, weight: f64, total: &mut f64| -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("loss term {}", term.label())));
        }
        terms.insert(term, value);
        *total += weight * value;
        Ok(())
    };

    for term in LossTerm::ALL {
        if !preset.active(term) {
            terms.insert(term, 0.0);
            continue;
        }
        match term {
            AdvA => {
                let v = lsgan_g_loss(bundle.need(AdvA, "d_a_syn")?);
                record(&mut terms, AdvA, v, 1.0, &mut total_generator)?;
                let d = lsgan_d_loss(bundle.need(AdvA, "d_a_real")?, bundle.need(AdvA, "d_a_syn")?)?;
                total_d_a += d;
            }
            AdvB => {
                let v = lsgan_g_loss(bundle.need(AdvB, "d_b_syn")?);
                record(&mut terms, AdvB, v, 1.0, &mut total_generator)?;
                let d = lsgan_d_loss(bundle.need(AdvB, "d_b_real")?, bundle.need(AdvB, "d_b_syn")?)?;
                total_d_b += d;
            }
            SynA => {
                let v = l1_loss(bundle.need(SynA, "real_a")?, bundle.need(SynA, "syn_a")?)?;
                record(&mut terms, SynA, v, w.mu_a, &mut total_generator)?;
            }
            SynB => {
                let v = l1_loss(bundle.need(SynB, "real_b")?, bundle.need(SynB, "syn_b")?)?;
                record(&mut terms, SynB, v, w.mu_b, &mut total_generator)?;
            }
            CycA => {
                let v = l1_loss(bundle.need(CycA, "real_a")?, bundle.need(CycA, "cyc_a")?)?;
                record(&mut terms, CycA, v, w.lambda_a, &mut total_generator)?;
            }
            CycB => {
                let v = l1_loss(bundle.need(CycB, "real_b")?, bundle.need(CycB, "cyc_b")?)?;
                record(&mut terms, CycB, v, w.lambda_b, &mut total_generator)?;
            }
            CsA => {
                let v = l1_loss(bundle.need(CsA, "syn_a")?, bundle.need(CsA, "cyc_a")?)?;
                record(&mut terms, CsA, v, w.omega_a, &mut total_generator)?;
            }
            CsB => {
                let v = l1_loss(bundle.need(CsB, "syn_b")?, bundle.need(CsB, "cyc_b")?)?;
                record(&mut terms, CsB, v, w.omega_b, &mut total_generator)?;
            }
            CdA => {
                let v = cd_g_loss(bundle.need(CdA, "d_a_cyc")?);
                record(&mut terms, CdA, v, 1.0, &mut total_generator)?;
                let d = cd_d_loss(bundle.need(CdA, "d_a_real")?, bundle.need(CdA, "d_a_cyc")?)?;
                total_d_a += d;
            }
            CdB => {
                let v = cd_g_loss(bundle.need(CdB, "d_b_cyc")?);
                record(&mut terms, CdB, v, 1.0, &mut total_generator)?;
                let d = cd_d_loss(bundle.need(CdB, "d_b_real")?, bundle.need(CdB, "d_b_cyc")?)?;
                total_d_b += d;
            }
        }
    }

    if !(total_d_a.is_finite() && total_d_b.is_finite()) {
        return Err(Error::NonFinite("discriminator total".into()));
    }

    Ok(LossReport {
        terms,
        total_generator,
        total_discriminator_a: total_d_a,
        total_discriminator_b: total_d_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{preset, PresetName};
    use ndarray::Array3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn feat(value: f64) -> Feat {
        Array3::from_elem((1, 2, 2), value)
    }

    fn random_feat(rng: &mut ChaCha8Rng, dim: (usize, usize, usize)) -> Feat {
        Array3::from_shape_fn(dim, |_| rng.gen_range(-2.0..2.0))
    }

    #[test]
    fn lsgan_d_loss_at_perfect_and_fooled_extremes() {
        assert_eq!(lsgan_d_loss(&feat(1.0), &feat(0.0)).unwrap(), 0.0);
        assert_eq!(lsgan_d_loss(&feat(0.0), &feat(1.0)).unwrap(), 2.0);
    }

    #[test]
    fn lsgan_g_loss_direct_values() {
        assert_eq!(lsgan_g_loss(&feat(1.0)), 0.0);
        assert_eq!(lsgan_g_loss(&feat(0.0)), 1.0);
        assert_eq!(lsgan_g_loss(&feat(0.5)), 0.25);
    }

    #[test]
    fn cd_losses_mirror_the_lsgan_form_with_cycled_fakes() {
        assert_eq!(cd_d_loss(&feat(1.0), &feat(0.0)).unwrap(), 0.0);
        assert_eq!(cd_d_loss(&feat(0.0), &feat(1.0)).unwrap(), 2.0);
        assert_eq!(cd_g_loss(&feat(1.0)), 0.0);
        assert_eq!(cd_g_loss(&feat(0.0)), 1.0);
        // structurally identical to the plain adversarial split
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (r, c) = (random_feat(&mut rng, (1, 3, 3)), random_feat(&mut rng, (1, 3, 3)));
        assert_eq!(cd_d_loss(&r, &c).unwrap(), lsgan_d_loss(&r, &c).unwrap());
        assert_eq!(cd_g_loss(&c), lsgan_g_loss(&c));
    }

    #[test]
    fn l1_loss_direct_values() {
        let x = feat(1.0);
        let y = feat(-1.0);
        assert_eq!(l1_loss(&x, &x).unwrap(), 0.0);
        assert_eq!(l1_loss(&x, &y).unwrap(), 2.0);
    }

    #[test]
    fn l1_shape_mismatch_is_an_error() {
        let x = Array3::<f64>::zeros((1, 2, 2));
        let y = Array3::<f64>::zeros((1, 2, 3));
        assert!(matches!(l1_loss(&x, &y), Err(Error::ShapeMismatch { .. })));
        assert!(lsgan_d_loss(&x, &y).is_err());
    }

    #[test]
    fn paired_losses_reduce_to_l1_applied_twice() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dim = (3, 4, 4);
        let (ra, sa) = (random_feat(&mut rng, dim), random_feat(&mut rng, dim));
        let (rb, sb) = (random_feat(&mut rng, dim), random_feat(&mut rng, dim));
        let (la, lb) = synthesized_losses(&ra, &sa, &rb, &sb).unwrap();
        assert_eq!(la, l1_loss(&ra, &sa).unwrap());
        assert_eq!(lb, l1_loss(&rb, &sb).unwrap());
        let (ca, cb) = cycle_losses(&ra, &sa, &rb, &sb).unwrap();
        assert_eq!((ca, cb), (la, lb));
    }

    #[test]
    fn cyclic_synthesized_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dim = (3, 4, 4);
        for _ in 0..50 {
            let real = random_feat(&mut rng, dim);
            let syn = random_feat(&mut rng, dim);
            let cyc = random_feat(&mut rng, dim);
            let cs = l1_loss(&syn, &cyc).unwrap();
            let bound = l1_loss(&syn, &real).unwrap() + l1_loss(&real, &cyc).unwrap();
            assert!(cs <= bound + 1e-9);
        }
    }

    /// Plain scalar-loop recomputations of each loss.
    mod oracle {
        pub fn l1(x: &[f64], y: &[f64]) -> f64 {
            let mut acc = 0.0;
            for i in 0..x.len() {
                acc += (x[i] - y[i]).abs();
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
    }

    #[test]
    fn losses_match_scalar_loop_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let dim = (1, 2, 2);
            let x = random_feat(&mut rng, dim);
            let y = random_feat(&mut rng, dim);
            let (xs, ys) = (x.as_slice().unwrap(), y.as_slice().unwrap());
            assert!((l1_loss(&x, &y).unwrap() - oracle::l1(xs, ys)).abs() < 1e-9);
            let expect_d = oracle::msq_to(xs, 1.0) + oracle::msq_to(ys, 0.0);
            assert!((lsgan_d_loss(&x, &y).unwrap() - expect_d).abs() < 1e-9);
            assert!((lsgan_g_loss(&y) - oracle::msq_to(ys, 1.0)).abs() < 1e-9);
        }
    }

    /// Central finite differences of a scalar loss with respect to one
    /// input tensor.
    fn fd_grad(mut f: impl FnMut(&Feat) -> f64, x: &Feat, h: f64) -> Feat {
        let mut g = Feat::zeros(x.dim());
        let mut probe = x.clone();
        for idx in 0..x.len() {
            let flat = probe.as_slice_mut().unwrap();
            let orig = flat[idx];
            flat[idx] = orig + h;
            let up = f(&probe);
            probe.as_slice_mut().unwrap()[idx] = orig - h;
            let down = f(&probe);
            probe.as_slice_mut().unwrap()[idx] = orig;
            g.as_slice_mut().unwrap()[idx] = (up - down) / (2.0 * h);
        }
        g
    }

    fn assert_grads_close(analytic: &Feat, numeric: &Feat, tol: f64) {
        for (a, n) in analytic.iter().zip(numeric.iter()) {
            let denom = a.abs().max(n.abs()).max(1e-8);
            assert!((a - n).abs() / denom < tol, "analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dim = (2, 3, 3);
        let h = 1e-5;
        let x = random_feat(&mut rng, dim);
        let y = random_feat(&mut rng, dim);

        let analytic = l1_loss_grad(&x, &y).unwrap();
        let numeric = fd_grad(|p| l1_loss(p, &y).unwrap(), &x, h);
        assert_grads_close(&analytic, &numeric, 1e-4);

        let analytic = mean_square_to_grad(&x, 1.0);
        let numeric = fd_grad(|p| lsgan_g_loss(p), &x, h);
        assert_grads_close(&analytic, &numeric, 1e-4);

        let analytic = mean_square_to_grad(&x, 0.0);
        let numeric = fd_grad(|p| lsgan_d_loss(&y, p).unwrap(), &x, h);
        assert_grads_close(&analytic, &numeric, 1e-4);
    }

    fn unit_bundle<'a>(u: &'a Feat) -> ForwardBundle<'a> {
        ForwardBundle {
            real_a: Some(u),
            real_b: Some(u),
            syn_a: Some(u),
            syn_b: Some(u),
            cyc_a: Some(u),
            cyc_b: Some(u),
            d_a_real: Some(u),
            d_a_syn: Some(u),
            d_a_cyc: Some(u),
            d_b_real: Some(u),
            d_b_syn: Some(u),
            d_b_cyc: Some(u),
        }
    }

    #[test]
    fn cdgan_composite_with_unit_terms_totals_114() {
        // zero patch maps make every generator-side adversarial term 1;
        // real=1, syn=0, cyc alternating {2,0} makes every L1 term exactly 1
        let zeros = feat(0.0);
        let ones = feat(1.0);
        let alternating = Array3::from_shape_vec((1, 2, 2), vec![2.0, 0.0, 2.0, 0.0]).unwrap();
        let bundle = ForwardBundle {
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
        let report = total_objective(&preset(PresetName::CdGan), &bundle).unwrap();
        for t in LossTerm::ALL {
            assert!((report.term(t) - 1.0).abs() < 1e-12, "{t:?} = {}", report.term(t));
        }
        assert!((report.total_generator - 114.0).abs() < 1e-9);
    }

    #[test]
    fn gan_preset_totals_only_the_adversarial_pair() {
        let zeros = feat(0.0);
        let bundle = ForwardBundle {
            d_a_real: Some(&zeros),
            d_a_syn: Some(&zeros),
            d_b_real: Some(&zeros),
            d_b_syn: Some(&zeros),
            ..Default::default()
        };
        let report = total_objective(&preset(PresetName::Gan), &bundle).unwrap();
        assert_eq!(report.total_generator, report.term(LossTerm::AdvA) + report.term(LossTerm::AdvB));
        for t in [LossTerm::SynA, LossTerm::CycA, LossTerm::CsA, LossTerm::CdA] {
            assert_eq!(report.term(t), 0.0);
        }
    }

    #[test]
    fn cyclegan_and_its_plus_variant_differ_only_in_cd_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dim = (1, 2, 2);
        let feats: Vec<Feat> = (0..12).map(|_| random_feat(&mut rng, dim)).collect();
        let bundle = ForwardBundle {
            real_a: Some(&feats[0]),
            real_b: Some(&feats[1]),
            syn_a: Some(&feats[2]),
            syn_b: Some(&feats[3]),
            cyc_a: Some(&feats[4]),
            cyc_b: Some(&feats[5]),
            d_a_real: Some(&feats[6]),
            d_a_syn: Some(&feats[7]),
            d_a_cyc: Some(&feats[8]),
            d_b_real: Some(&feats[9]),
            d_b_syn: Some(&feats[10]),
            d_b_cyc: Some(&feats[11]),
        };
        let base = total_objective(&preset(PresetName::CycleGan), &bundle).unwrap();
        let plus = total_objective(&preset(PresetName::CycleGanPlus), &bundle).unwrap();
        for t in LossTerm::ALL {
            if matches!(t, LossTerm::CdA | LossTerm::CdB) {
                assert_eq!(base.term(t), 0.0);
                assert!(plus.term(t) > 0.0);
            } else {
                assert_eq!(base.term(t), plus.term(t), "{t:?}");
            }
        }
        let cd_g = plus.term(LossTerm::CdA) + plus.term(LossTerm::CdB);
        assert!((plus.total_generator - base.total_generator - cd_g).abs() < 1e-12);
        let cd_d_a = cd_d_loss(&feats[6], &feats[8]).unwrap();
        assert!((plus.total_discriminator_a - base.total_discriminator_a - cd_d_a).abs() < 1e-12);
    }

    #[test]
    fn missing_input_for_an_active_term_is_an_error() {
        let zeros = feat(0.0);
        let bundle = ForwardBundle {
            d_a_real: Some(&zeros),
            d_a_syn: Some(&zeros),
            d_b_real: Some(&zeros),
            d_b_syn: Some(&zeros),
            ..Default::default()
        };
        let err = total_objective(&preset(PresetName::CycleGan), &bundle);
        assert!(matches!(err, Err(Error::MissingLossInput { .. })));
    }

    #[test]
    fn doubled_weights_double_their_contributions() {
        let ones = feat(1.0);
        let zeros = feat(0.0);
        let bundle = ForwardBundle {
            real_a: Some(&ones),
            real_b: Some(&ones),
            syn_a: Some(&zeros),
            syn_b: Some(&zeros),
            cyc_a: Some(&ones),
            cyc_b: Some(&ones),
            d_a_real: Some(&zeros),
            d_a_syn: Some(&zeros),
            d_a_cyc: Some(&zeros),
            d_b_real: Some(&zeros),
            d_b_syn: Some(&zeros),
            d_b_cyc: Some(&zeros),
        };
        let mut p = preset(PresetName::CdGan);
        let base = total_objective(&p, &bundle).unwrap();
        p.weights.mu_a *= 2.0;
        p.weights.mu_b *= 2.0;
        p.weights.lambda_a *= 2.0;
        p.weights.lambda_b *= 2.0;
        p.weights.omega_a *= 2.0;
        p.weights.omega_b *= 2.0;
        let doubled = total_objective(&p, &bundle).unwrap();
        let weighted_part = base.total_generator - 4.0; // minus adv & cd units
        assert!((doubled.total_generator - (4.0 + 2.0 * weighted_part)).abs() < 1e-9);
    }

    #[test]
    fn non_finite_term_is_reported_by_name() {
        let bad = feat(f64::NAN);
        let ok = feat(0.0);
        let bundle = ForwardBundle {
            d_a_real: Some(&ok),
            d_a_syn: Some(&bad),
            d_b_real: Some(&ok),
            d_b_syn: Some(&ok),
            ..Default::default()
        };
        match total_objective(&preset(PresetName::Gan), &bundle) {
            Err(Error::NonFinite(msg)) => assert!(msg.contains("adv_a"), "{msg}"),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn l1_is_symmetric_and_nonnegative(
            xs in proptest::collection::vec(-3.0f64..3.0, 12),
            ys in proptest::collection::vec(-3.0f64..3.0, 12),
        ) {
            let x = Array3::from_shape_vec((3, 2, 2), xs).unwrap();
            let y = Array3::from_shape_vec((3, 2, 2), ys).unwrap();
            let xy = l1_loss(&x, &y).unwrap();
            let yx = l1_loss(&y, &x).unwrap();
            prop_assert!((xy - yx).abs() < 1e-12);
            prop_assert!(xy >= 0.0);
            prop_assert_eq!(l1_loss(&x, &x).unwrap(), 0.0);
        }
    }
}
