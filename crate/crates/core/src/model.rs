//! The assembled network: encoder, structure reasoning, attention, critic
//! and classifier over one parameter store.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{
    attend_and_pool, global_pool, AttentionBundle, AttentionParams, CriticDims, CriticParams,
};
use crate::autograd::{softmax, ParamStore, Tape, Var};
use crate::data::Point;
use crate::error::{Error, Result};
use crate::fairness::ClassifierHead;
use crate::reasoning::{
    encode_points, initial_structures, points_matrix, predict_offsets, structure_features,
    update_structures, EmbedParams, EncoderDims, EncoderParams, LocalStructureSet,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    pub c1: usize,
    pub c2: usize,
    pub d_p: usize,
    pub d_s: usize,
    pub d_c: usize,
    pub r: usize,
    pub tnet_pointwise: Vec<usize>,
    pub tnet_dense: Vec<usize>,
    pub classifier_hidden: Vec<usize>,
    pub critic: CriticDims,
}

impl ModelDims {
    /// Widths of the full-scale architecture.
    pub fn standard() -> Self {
        Self {
            c1: 64,
            c2: 128,
            d_p: 512,
            d_s: 1024,
            d_c: 256,
            r: 4,
            tnet_pointwise: vec![64, 128, 1024],
            tnet_dense: vec![512, 256],
            classifier_hidden: vec![512, 256],
            critic: CriticDims {
                conv: 256,
                state_hidden: 256,
                branch: 64,
            },
        }
    }

    /// Narrow widths that train in seconds on one CPU core.
    pub fn desk() -> Self {
        Self {
            c1: 16,
            c2: 32,
            d_p: 32,
            d_s: 32,
            d_c: 16,
            r: 4,
            tnet_pointwise: vec![16, 32],
            tnet_dense: vec![16],
            classifier_hidden: vec![32, 32],
            critic: CriticDims {
                conv: 8,
                state_hidden: 32,
                branch: 16,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [self.c1, self.c2, self.d_p, self.d_s, self.d_c, self.r];
        if widths.contains(&0) {
            return Err(Error::Validation("model widths must be positive".into()));
        }
        if self.d_s % self.r != 0 {
            return Err(Error::Validation(format!(
                "r={} does not divide d_s={}",
                self.r, self.d_s
            )));
        }
        Ok(())
    }
}

/// Structure construction settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureConfig {
    pub l: usize,
    pub m: usize,
    pub fps_start: usize,
}

/// Which learned components take part in a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Switches {
    /// Offset voting (and, in training, the consistency loss).
    pub cgr: bool,
    /// Geometric attention (and, in training, the critic).
    pub cga: bool,
}

impl Switches {
    pub const ALL: Switches = Switches {
        cgr: true,
        cga: true,
    };
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InorNet {
    pub dims: ModelDims,
    pub structure: StructureConfig,
    #[serde(skip)]
    pub store: ParamStore,
    pub encoder: EncoderParams,
    pub embed: EmbedParams,
    pub attention: AttentionParams,
    pub critic: CriticParams,
    pub classifier: ClassifierHead,
}

/// Tape handles and side products of one sample's forward pass.
#[derive(Debug, Clone)]
pub struct SampleForward {
    pub structures: LocalStructureSet,
    pub point_features: Var,
    pub f_m: Var,
    /// Attention map; absent when attention is switched off.
    pub a_m: Option<Var>,
    pub f_p: Var,
    pub f_g: Var,
    pub f_g_plain: Var,
    pub logits: Var,
}

impl SampleForward {
    pub fn bundle(&self) -> Option<AttentionBundle> {
        self.a_m.map(|a_m| AttentionBundle {
            f_m: self.f_m,
            a_m,
            f_p: self.f_p,
            f_g: self.f_g,
            f_g_plain: self.f_g_plain,
        })
    }
}

/// Plain evaluation of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub f_g: Vec<f64>,
}

impl InorNet {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dims: ModelDims,
        structure: StructureConfig,
        tau: f64,
        centered_norm: bool,
        initial_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        dims.validate()?;
        if structure.l == 0 || structure.m == 0 {
            return Err(Error::Validation("L and m must be positive".into()));
        }
        if !(tau > 0.0) {
            return Err(Error::Validation(format!(
                "tau must be positive, got {tau}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = EncoderParams::new(
            &mut store,
            EncoderDims {
                c1: dims.c1,
                c2: dims.c2,
                d_p: dims.d_p,
                d_s: dims.d_s,
            },
            &dims.tnet_pointwise,
            &dims.tnet_dense,
            &mut rng,
        );
        let embed = EmbedParams::new(&mut store, dims.d_s, dims.d_c, tau, centered_norm, &mut rng);
        let classifier = ClassifierHead::new(
            &mut store,
            dims.d_s,
            &dims.classifier_hidden,
            initial_classes,
            &mut rng,
        );
        let attention = AttentionParams::new(&mut store, dims.d_s, dims.r, &mut rng)?;
        let critic = CriticParams::new(&mut store, dims.d_s, structure.l, dims.critic, &mut rng);
        Ok(Self {
            dims,
            structure,
            store,
            encoder,
            embed,
            attention,
            critic,
            classifier,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.num_classes()
    }

    /// Builds the local structures of a cloud from its point features,
    /// applying one round of offset voting when `offsets` is set.
    pub fn structures_for(
        &self,
        points: &[Point],
        features: &Array2<f64>,
        offsets: bool,
    ) -> Result<LocalStructureSet> {
        let s = self.structure;
        if points.len() < s.l || points.len() < s.m {
            return Err(Error::Validation(format!(
                "cloud of {} points cannot hold L={} structures of m={} neighbors",
                points.len(),
                s.l,
                s.m
            )));
        }
        let initial = initial_structures(points, features.view(), s.l, s.m, s.fps_start)?;
        if !offsets {
            return Ok(initial);
        }
        let delta = predict_offsets(
            &initial,
            points,
            features.view(),
            &self.encoder.gamma_o,
            &self.store,
        )?;
        update_structures(points, &initial, &delta, features.view())
    }

    pub fn forward<'s>(
        &'s self,
        tape: &mut Tape<'s>,
        points: &[Point],
        switches: Switches,
    ) -> Result<SampleForward> {
        let x = tape.constant(points_matrix(points));
        let point_features = encode_points(tape, &self.encoder, x)?;
        let features = tape.value(point_features).clone();
        let structures = self.structures_for(points, &features, switches.cgr)?;
        let f_m = structure_features(tape, &structures, point_features, &self.encoder.gamma_s);
        let (a_m, f_p, f_g, f_g_plain) = if switches.cga {
            let b = attend_and_pool(tape, f_m, &self.attention);
            (Some(b.a_m), b.f_p, b.f_g, b.f_g_plain)
        } else {
            let f_g = global_pool(tape, f_m);
            (None, f_m, f_g, f_g)
        };
        let logits = self.classifier.forward(tape, f_g);
        Ok(SampleForward {
            structures,
            point_features,
            f_m,
            a_m,
            f_p,
            f_g,
            f_g_plain,
            logits,
        })
    }

    pub fn predict(&self, points: &[Point], switches: Switches) -> Result<Prediction> {
        let mut tape = Tape::new(&self.store);
        let out = self.forward(&mut tape, points, switches)?;
        let logits = tape.value(out.logits);
        let probs = softmax(logits.as_slice().expect("contiguous"));
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::Validation("non-finite class scores".into()));
        }
        Ok(Prediction {
            probs,
            f_g: tape.value(out.f_g).iter().copied().collect(),
        })
    }
}
