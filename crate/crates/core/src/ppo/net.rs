//! Two-headed MLP: one ReLU hidden layer feeding action logits and a state value.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub obs_dim: usize,
    pub n_actions: usize,
    pub hidden_units: usize,
    pub activation: Activation,
    /// When false the value head gets its own hidden layer.
    pub shared_trunk: bool,
}

impl PolicySpec {
    pub fn new(obs_dim: usize, n_actions: usize) -> Self {
        Self {
            obs_dim,
            n_actions,
            hidden_units: 256,
            activation: Activation::Relu,
            shared_trunk: true,
        }
    }

    pub fn with_hidden(mut self, hidden_units: usize) -> Self {
        self.hidden_units = hidden_units;
        self
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        if self.hidden_units == 0 {
            return Err("hidden_units");
        }
        if self.obs_dim == 0 {
            return Err("obs_dim");
        }
        if self.n_actions == 0 {
            return Err("n_actions");
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        Layout::new(self)
    }

    pub fn n_params(&self) -> usize {
        self.layout().total
    }
}

/// Offsets of each tensor inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Layout {
    d: usize,
    h: usize,
    a: usize,
    w1: usize,
    b1: usize,
    wp: usize,
    bp: usize,
    wv: usize,
    bv: usize,
    value_trunk: Option<(usize, usize)>,
    total: usize,
}

impl Layout {
    fn new(spec: &PolicySpec) -> Self {
        let (d, h, a) = (spec.obs_dim, spec.hidden_units, spec.n_actions);
        let w1 = 0;
        let b1 = w1 + h * d;
        let wp = b1 + h;
        let bp = wp + a * h;
        let wv = bp + a;
        let bv = wv + h;
        let mut total = bv + 1;
        let value_trunk = if spec.shared_trunk {
            None
        } else {
            let w = total;
            let b = w + h * d;
            total = b + h;
            Some((w, b))
        };
        Self {
            d,
            h,
            a,
            w1,
            b1,
            wp,
            bp,
            wv,
            bv,
            value_trunk,
            total,
        }
    }
}

/// Network weights, stored flat so the optimizer and gradient checks can
/// treat them as one vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    spec: PolicySpec,
    layout: Layout,
    pub data: Vec<f64>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    value_pre: Vec<f64>,
    value_hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub value: f64,
}

impl Params {
    pub fn zeros(spec: &PolicySpec) -> Self {
        let layout = spec.layout();
        Self {
            spec: spec.clone(),
            layout,
            data: vec![0.0; layout.total],
        }
    }

    pub fn from_vec(spec: &PolicySpec, data: Vec<f64>) -> Option<Self> {
        let layout = spec.layout();
        (data.len() == layout.total).then(|| Self {
            spec: spec.clone(),
            layout,
            data,
        })
    }

    /// Scaled uniform init: weights ~ U(-s, s) with `s = gain * sqrt(3 / fan_in)`
    /// (variance `gain^2 / fan_in`). Gains: sqrt(2) for hidden layers, 0.01
    /// for the policy head, 1 for the value head. Biases start at zero.
    pub fn init<R: Rng>(spec: &PolicySpec, rng: &mut R) -> Self {
        let mut p = Self::zeros(spec);
        let l = p.layout;
        let mut fill = |data: &mut [f64], fan_in: usize, gain: f64| {
            let s = gain * (3.0 / fan_in as f64).sqrt();
            for w in data.iter_mut() {
                *w = rng.gen_range(-s..s);
            }
        };
        let relu_gain = std::f64::consts::SQRT_2;
        fill(&mut p.data[l.w1..l.b1], l.d, relu_gain);
        fill(&mut p.data[l.wp..l.bp], l.h, 0.01);
        fill(&mut p.data[l.wv..l.bv], l.h, 1.0);
        if let Some((w, b)) = l.value_trunk {
            fill(&mut p.data[w..b], l.d, relu_gain);
        }
        p
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Logits and value for one observation.
    pub fn forward(&self, obs: &[f64]) -> (Vec<f64>, f64) {
        let c = self.forward_cached(obs);
        (c.logits, c.value)
    }

    pub fn forward_cached(&self, obs: &[f64]) -> ForwardCache {
        let l = self.layout;
        assert_eq!(
            obs.len(),
            l.d,
            "observation has {} entries, network expects {}",
            obs.len(),
            l.d
        );
        let (pre, hidden) = self.trunk(obs, l.w1, l.b1);
        let mut logits = self.data[l.bp..l.bp + l.a].to_vec();
        for (a, logit) in logits.iter_mut().enumerate() {
            let row = &self.data[l.wp + a * l.h..l.wp + (a + 1) * l.h];
            *logit += dot(row, &hidden);
        }
        let (value_pre, value_hidden) = match l.value_trunk {
            Some((w, b)) => self.trunk(obs, w, b),
            None => (Vec::new(), Vec::new()),
        };
        let vh = if l.value_trunk.is_some() {
            &value_hidden
        } else {
            &hidden
        };
        let value = self.data[l.bv] + dot(&self.data[l.wv..l.bv], vh);
        ForwardCache {
            pre,
            hidden,
            value_pre,
            value_hidden,
            logits,
            value,
        }
    }

    fn trunk(&self, obs: &[f64], w: usize, b: usize) -> (Vec<f64>, Vec<f64>) {
        let l = self.layout;
        // Observations are mostly zero padding; skipping those terms leaves
        // the sums unchanged.
        let nz: Vec<usize> = (0..l.d).filter(|&i| obs[i] != 0.0).collect();
        let mut pre = self.data[b..b + l.h].to_vec();
        for (j, z) in pre.iter_mut().enumerate() {
            let row = &self.data[w + j * l.d..w + (j + 1) * l.d];
            *z += nz.iter().map(|&i| row[i] * obs[i]).sum::<f64>();
        }
        let hidden = pre.iter().map(|&z| z.max(0.0)).collect();
        (pre, hidden)
    }

    /// Accumulates into `grad` the gradient of a scalar loss whose partials
    /// with respect to this sample's logits and value are given.
    pub fn backward(
        &self,
        obs: &[f64],
        cache: &ForwardCache,
        dlogits: &[f64],
        dvalue: f64,
        grad: &mut [f64],
    ) {
        let l = self.layout;
        debug_assert_eq!(grad.len(), l.total);
        let mut dh = vec![0.0; l.h];
        for (a, &g) in dlogits.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[l.bp + a] += g;
            let row = &self.data[l.wp + a * l.h..l.wp + (a + 1) * l.h];
            let grow = &mut grad[l.wp + a * l.h..l.wp + (a + 1) * l.h];
            for j in 0..l.h {
                grow[j] += g * cache.hidden[j];
                dh[j] += g * row[j];
            }
        }
        grad[l.bv] += dvalue;
        match l.value_trunk {
            None => {
                for j in 0..l.h {
                    grad[l.wv + j] += dvalue * cache.hidden[j];
                    dh[j] += dvalue * self.data[l.wv + j];
                }
            }
            Some((w, b)) => {
                let mut dvh = vec![0.0; l.h];
                for j in 0..l.h {
                    grad[l.wv + j] += dvalue * cache.value_hidden[j];
                    dvh[j] = dvalue * self.data[l.wv + j];
                }
                self.backward_trunk(obs, &cache.value_pre, &dvh, w, b, grad);
            }
        }
        self.backward_trunk(obs, &cache.pre, &dh, l.w1, l.b1, grad);
    }

    fn backward_trunk(&self, obs: &[f64], pre: &[f64], dh: &[f64], w: usize, b: usize, grad: &mut [f64]) {
        let l = self.layout;
        let nz: Vec<usize> = (0..l.d).filter(|&i| obs[i] != 0.0).collect();
        for j in 0..l.h {
            if pre[j] <= 0.0 || dh[j] == 0.0 {
                continue;
            }
            let dz = dh[j];
            grad[b + j] += dz;
            let grow = &mut grad[w + j * l.d..w + (j + 1) * l.d];
            for &i in &nz {
                grow[i] += dz * obs[i];
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_uniform_logits() {
        let spec = PolicySpec::new(6, 4).with_hidden(8);
        let p = Params::zeros(&spec);
        let (logits, value) = p.forward(&[0.3; 6]);
        assert_eq!(logits, vec![0.0; 4]);
        assert_eq!(value, 0.0);
    }

    #[test]
    fn layout_sizes() {
        let mut spec = PolicySpec::new(84, 9);
        assert_eq!(spec.n_params(), 256 * 84 + 256 + 9 * 256 + 9 + 256 + 1);
        spec.shared_trunk = false;
        assert_eq!(spec.n_params(), 2 * (256 * 84 + 256) + 9 * 256 + 9 + 256 + 1);
    }

    #[test]
    fn init_is_seeded_and_finite() {
        let spec = PolicySpec::new(10, 3).with_hidden(16);
        let a = Params::init(&spec, &mut ChaCha8Rng::seed_from_u64(7));
        let b = Params::init(&spec, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
        assert!(a.data.iter().all(|w| w.is_finite()));
        let (logits, _) = a.forward(&[0.5; 10]);
        assert!(logits.iter().all(|x| x.is_finite()));
    }

    #[test]
    #[should_panic]
    fn forward_checks_dimension() {
        let p = Params::zeros(&PolicySpec::new(4, 2).with_hidden(3));
        p.forward(&[0.0; 5]);
    }
}
