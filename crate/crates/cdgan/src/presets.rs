//! Named loss presets: which of the ten loss terms each method activates.
//!
//! Each preset reproduces one published method's objective as a set of
//! active terms plus the default loss weights. The `+` presets add the
//! cyclic-discriminative adversarial pair to an existing method, which is
//! what the ablation sweep compares.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the ten loss terms that can appear in an objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LossTerm {
    AdvA,
    AdvB,
    SynA,
    SynB,
    CycA,
    CycB,
    CsA,
    CsB,
    CdA,
    CdB,
}

impl LossTerm {
    pub const ALL: [LossTerm; 10] = [
        LossTerm::AdvA,
        LossTerm::AdvB,
        LossTerm::SynA,
        LossTerm::SynB,
        LossTerm::CycA,
        LossTerm::CycB,
        LossTerm::CsA,
        LossTerm::CsB,
        LossTerm::CdA,
        LossTerm::CdB,
    ];

    pub fn label(self) -> &'static str {
        match self {
            LossTerm::AdvA => "adv_a",
            LossTerm::AdvB => "adv_b",
            LossTerm::SynA => "syn_a",
            LossTerm::SynB => "syn_b",
            LossTerm::CycA => "cyc_a",
            LossTerm::CycB => "cyc_b",
            LossTerm::CsA => "cs_a",
            LossTerm::CsB => "cs_b",
            LossTerm::CdA => "cd_a",
            LossTerm::CdB => "cd_b",
        }
    }

    fn bit(self) -> u16 {
        1 << (self as u16)
    }
}

/// A set of loss terms, used to describe which terms a preset activates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TermSet(u16);

impl TermSet {
    pub const EMPTY: TermSet = TermSet(0);

    pub fn of(terms: &[LossTerm]) -> Self {
        let mut set = TermSet::EMPTY;
        for &t in terms {
            set.0 |= t.bit();
        }
        set
    }

    pub fn contains(self, term: LossTerm) -> bool {
        self.0 & term.bit() != 0
    }

    pub fn union(self, other: TermSet) -> TermSet {
        TermSet(self.0 | other.0)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = LossTerm> {
        LossTerm::ALL.into_iter().filter(move |t| self.contains(*t))
    }

    /// Presence vector over the ten terms, in `LossTerm::ALL` order.
    pub fn as_bools(self) -> [bool; 10] {
        let mut out = [false; 10];
        for (i, t) in LossTerm::ALL.into_iter().enumerate() {
            out[i] = self.contains(t);
        }
        out
    }
}

/// Weights for the weighted loss terms in the combined objective.
/// Adversarial and cyclic-discriminative terms enter unweighted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub mu_a: f64,
    pub mu_b: f64,
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub omega_a: f64,
    pub omega_b: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mu_a: 15.0,
            mu_b: 15.0,
            lambda_a: 10.0,
            lambda_b: 10.0,
            omega_a: 30.0,
            omega_b: 30.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.mu_a,
            self.mu_b,
            self.lambda_a,
            self.lambda_b,
            self.omega_a,
            self.omega_b,
        ];
        for w in all {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config(format!("loss weight {w} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// The eleven runtime-selectable preset names. The string form is the
/// stable CLI spelling (`cdgan`, `cyclegan+`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PresetName {
    Gan,
    Pix2Pix,
    DualGan,
    CycleGan,
    Ps2Gan,
    CsGan,
    CdGan,
    DualGanPlus,
    CycleGanPlus,
    Ps2GanPlus,
    CsGanPlus,
}

impl PresetName {
    pub const ALL: [PresetName; 11] = [
        PresetName::Gan,
        PresetName::Pix2Pix,
        PresetName::DualGan,
        PresetName::CycleGan,
        PresetName::Ps2Gan,
        PresetName::CsGan,
        PresetName::CdGan,
        PresetName::DualGanPlus,
        PresetName::CycleGanPlus,
        PresetName::Ps2GanPlus,
        PresetName::CsGanPlus,
    ];

    /// The seven base methods, in comparison-table order.
    pub const BASE: [PresetName; 7] = [
        PresetName::Gan,
        PresetName::Pix2Pix,
        PresetName::DualGan,
        PresetName::CycleGan,
        PresetName::Ps2Gan,
        PresetName::CsGan,
        PresetName::CdGan,
    ];

    /// The nine configurations of the ablation sweep, in table order.
    pub const ABLATION: [PresetName; 9] = [
        PresetName::DualGan,
        PresetName::DualGanPlus,
        PresetName::CycleGan,
        PresetName::CycleGanPlus,
        PresetName::Ps2Gan,
        PresetName::Ps2GanPlus,
        PresetName::CsGan,
        PresetName::CsGanPlus,
        PresetName::CdGan,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Gan => "gan",
            PresetName::Pix2Pix => "pix2pix",
            PresetName::DualGan => "dualgan",
            PresetName::CycleGan => "cyclegan",
            PresetName::Ps2Gan => "ps2gan",
            PresetName::CsGan => "csgan",
            PresetName::CdGan => "cdgan",
            PresetName::DualGanPlus => "dualgan+",
            PresetName::CycleGanPlus => "cyclegan+",
            PresetName::Ps2GanPlus => "ps2gan+",
            PresetName::CsGanPlus => "csgan+",
        }
    }

    pub fn parse(s: &str) -> Result<PresetName> {
        PresetName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }

    /// The base method a `+` preset extends, if any.
    pub fn base(self) -> Option<PresetName> {
        match self {
            PresetName::DualGanPlus => Some(PresetName::DualGan),
            PresetName::CycleGanPlus => Some(PresetName::CycleGan),
            PresetName::Ps2GanPlus => Some(PresetName::Ps2Gan),
            PresetName::CsGanPlus => Some(PresetName::CsGan),
            _ => None,
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

// Serialized as the CLI string so config files read naturally.
impl Serialize for PresetName {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for PresetName {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        PresetName::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// A named method objective: its active loss terms plus weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPreset {
    pub name: PresetName,
    pub terms: TermSet,
    pub weights: LossWeights,
}

impl LossPreset {
    pub fn active(&self, term: LossTerm) -> bool {
        self.terms.contains(term)
    }

    /// True when any term that depends on cycled images is active.
    pub fn needs_cycle(&self) -> bool {
        use LossTerm::*;
        [CycA, CycB, CsA, CsB, CdA, CdB]
            .into_iter()
            .any(|t| self.terms.contains(t))
    }
}

const CD_PAIR: [LossTerm; 2] = [LossTerm::CdA, LossTerm::CdB];

fn base_terms(name: PresetName) -> TermSet {
    use LossTerm::*;
    match name {
        PresetName::Gan => TermSet::of(&[AdvA, AdvB]),
        PresetName::Pix2Pix => TermSet::of(&[AdvA, AdvB, SynA, SynB]),
        // DualGAN's reconstruction loss plays the role of the cycle pair.
        PresetName::DualGan | PresetName::CycleGan => TermSet::of(&[AdvA, AdvB, CycA, CycB]),
        PresetName::Ps2Gan => TermSet::of(&[AdvA, AdvB, SynA, SynB, CycA, CycB]),
        PresetName::CsGan => TermSet::of(&[AdvA, AdvB, CycA, CycB, CsA, CsB]),
        PresetName::CdGan => TermSet::of(&LossTerm::ALL),
        PresetName::DualGanPlus
        | PresetName::CycleGanPlus
        | PresetName::Ps2GanPlus
        | PresetName::CsGanPlus => {
            base_terms(name.base().expect("plus preset has a base")).union(TermSet::of(&CD_PAIR))
        }
    }
}

/// Looks up a preset by name with the default weights.
pub fn preset(name: PresetName) -> LossPreset {
    LossPreset {
        name,
        terms: base_terms(name),
        weights: LossWeights::default(),
    }
}

/// Looks up a preset by its CLI string.
pub fn preset_by_name(name: &str) -> Result<LossPreset> {
    Ok(preset(PresetName::parse(name)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Presence matrix over (adv_a, adv_b, syn_a, syn_b, cyc_a, cyc_b,
    // cs_a, cs_b, cd_a, cd_b), one row per method.
    const EXPECTED_MATRIX: [(PresetName, [bool; 10]); 7] = [
        (PresetName::Gan, [true, true, false, false, false, false, false, false, false, false]),
        (PresetName::Pix2Pix, [true, true, true, true, false, false, false, false, false, false]),
        (PresetName::DualGan, [true, true, false, false, true, true, false, false, false, false]),
        (PresetName::CycleGan, [true, true, false, false, true, true, false, false, false, false]),
        (PresetName::Ps2Gan, [true, true, true, true, true, true, false, false, false, false]),
        (PresetName::CsGan, [true, true, false, false, true, true, true, true, false, false]),
        (PresetName::CdGan, [true, true, true, true, true, true, true, true, true, true]),
    ];

    #[test]
    fn base_presets_match_the_published_matrix() {
        for (name, expected) in EXPECTED_MATRIX {
            assert_eq!(preset(name).terms.as_bools(), expected, "{name}");
        }
    }

    #[test]
    fn plus_presets_add_exactly_the_cd_pair() {
        for name in [
            PresetName::DualGanPlus,
            PresetName::CycleGanPlus,
            PresetName::Ps2GanPlus,
            PresetName::CsGanPlus,
        ] {
            let base = preset(name.base().unwrap());
            let plus = preset(name);
            assert_eq!(plus.terms, base.terms.union(TermSet::of(&CD_PAIR)), "{name}");
            assert_eq!(plus.terms.len(), base.terms.len() + 2, "{name}");
            assert!(plus.active(LossTerm::CdA) && plus.active(LossTerm::CdB));
        }
    }

    #[test]
    fn cdgan_activates_all_ten_terms() {
        assert_eq!(preset(PresetName::CdGan).terms.len(), 10);
    }

    #[test]
    fn names_round_trip_through_cli_strings() {
        for name in PresetName::ALL {
            assert_eq!(PresetName::parse(name.as_str()).unwrap(), name);
        }
        assert!(matches!(
            PresetName::parse("wgan"),
            Err(Error::UnknownPreset(_))
        ));
    }

    #[test]
    fn default_weights_match_the_training_setup() {
        let w = LossWeights::default();
        assert_eq!((w.mu_a, w.mu_b), (15.0, 15.0));
        assert_eq!((w.lambda_a, w.lambda_b), (10.0, 10.0));
        assert_eq!((w.omega_a, w.omega_b), (30.0, 30.0));
        w.validate().unwrap();
    }

    #[test]
    fn negative_weights_are_rejected() {
        let mut w = LossWeights::default();
        w.omega_a = -1.0;
        assert!(w.validate().is_err());
    }
}
