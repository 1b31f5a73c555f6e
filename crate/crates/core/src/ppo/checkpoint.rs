use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::{Params, PolicySpec};
use super::TrainHyper;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Parameters plus everything needed to resume or reproduce them.
///
/// Stored as JSON; floats are written in shortest round-trip form and parsed
/// back exactly, so save/load is bit-exact for finite values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub spec: PolicySpec,
    pub hyper: TrainHyper,
    pub params: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("parameter count {got} does not match the policy spec ({expected})")]
    Shape { got: usize, expected: usize },
}

impl Checkpoint {
    pub fn new(params: &Params, hyper: &TrainHyper, seed: u64) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            seed,
            spec: params.spec().clone(),
            hyper: hyper.clone(),
            params: params.data.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(ckpt.version));
        }
        let expected = ckpt.spec.n_params();
        if ckpt.params.len() != expected {
            return Err(CheckpointError::Shape {
                got: ckpt.params.len(),
                expected,
            });
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn params(&self) -> Params {
        Params::from_vec(&self.spec, self.params.clone()).expect("length checked on load")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = PolicySpec::new(14, 5).with_hidden(9);
        let params = Params::init(&spec, &mut ChaCha8Rng::seed_from_u64(3));
        let ckpt = Checkpoint::new(&params, &TrainHyper::default(), 3);
        let back = Checkpoint::from_json(&ckpt.to_json()).unwrap();
        assert_eq!(back, ckpt);
        for (a, b) in back.params.iter().zip(&params.data) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.params(), params);
    }

    #[test]
    fn rejects_wrong_version_and_shape() {
        let spec = PolicySpec::new(2, 2).with_hidden(2);
        let mut ckpt = Checkpoint::new(&Params::zeros(&spec), &TrainHyper::default(), 0);
        ckpt.version = 9;
        assert!(matches!(
            Checkpoint::from_json(&ckpt.to_json()),
            Err(CheckpointError::Version(9))
        ));
        ckpt.version = CHECKPOINT_VERSION;
        ckpt.params.pop();
        assert!(matches!(
            Checkpoint::from_json(&ckpt.to_json()),
            Err(CheckpointError::Shape { .. })
        ));
    }

    proptest! {
        #[test]
        fn any_finite_weights_survive(weights in proptest::collection::vec(
            any::<f64>().prop_filter("finite", |w| w.is_finite()), 15)) {
            let spec = PolicySpec::new(2, 2).with_hidden(2);
            prop_assert_eq!(spec.n_params(), 15);
            let params = Params::from_vec(&spec, weights).unwrap();
            let ckpt = Checkpoint::new(&params, &TrainHyper::default(), 11);
            let back = Checkpoint::from_json(&ckpt.to_json()).unwrap();
            for (a, b) in back.params.iter().zip(&ckpt.params) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
