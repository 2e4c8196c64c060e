//! Fully connected ReLU network with a linear output layer, stored as one
//! flat parameter vector so optimizers and checkpoints can treat it as a slice.
//!
//! Layer `l` occupies `W_l` (`in x out`, row-major) followed by `b_l` (`out`).

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;

use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    sizes: Vec<usize>,
    data: Vec<f64>,
}

/// Activations retained from a forward pass: the input and every layer output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache always holds the input")
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl MlpParams {
    /// All-zero parameters for the given layer widths (input first, output last).
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|s| *s == 0) {
            return shape_err(format!("invalid layer widths {sizes:?}"));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            data: vec![0.0; param_count(sizes)],
        })
    }

    /// Uniform fan-in initialization; the output layer is scaled by `output_scale`.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], output_scale: f64, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(sizes)?;
        let layers = p.num_layers();
        let mut offset = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let scale = if l + 1 == layers { output_scale } else { 1.0 };
            for w in &mut p.data[offset..offset + fan_in * fan_out] {
                *w = rng.gen_range(-bound..bound) * scale;
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(p)
    }

    pub fn from_parts(sizes: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|s| *s == 0) {
            return shape_err(format!("invalid layer widths {sizes:?}"));
        }
        if param_count(&sizes) != data.len() {
            return shape_err(format!(
                "layer widths {sizes:?} need {} parameters, got {}",
                param_count(&sizes),
                data.len()
            ));
        }
        Ok(Self { sizes, data })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn layer_offset(&self, l: usize) -> usize {
        param_count(&self.sizes[..=l])
    }

    fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.layer_offset(l);
        let w = ArrayView2::from_shape((i, o), &self.data[off..off + i * o]).unwrap();
        let b = ArrayView1::from(&self.data[off + i * o..off + i * o + o]);
        (w, b)
    }

    /// Batched forward pass keeping every activation for backpropagation.
    pub fn forward_cached(&self, x: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        if x.ncols() != self.input_dim() {
            return shape_err(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.ncols()
            ));
        }
        let layers = self.num_layers();
        let mut activations = Vec::with_capacity(layers + 1);
        activations.push(x.to_owned());
        for l in 0..layers {
            let (w, b) = self.layer(l);
            let mut z = activations[l].dot(&w);
            z += &b;
            if l + 1 < layers {
                z.mapv_inplace(|v| v.max(0.0));
            }
            activations.push(z);
        }
        Ok(ForwardCache { activations })
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.activations.pop().unwrap())
    }

    /// Single-input forward pass.
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).unwrap();
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    /// Accumulates `d output` backpropagated through the cached pass into `grad`.
    pub fn backward(&self, cache: &ForwardCache, d_out: ArrayView2<'_, f64>, grad: &mut [f64]) -> Result<()> {
        if grad.len() != self.data.len() {
            return shape_err(format!(
                "gradient buffer has {} slots, network has {} parameters",
                grad.len(),
                self.data.len()
            ));
        }
        let layers = self.num_layers();
        if d_out.dim() != cache.output().dim() {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match output {:?}",
                d_out.dim(),
                cache.output().dim()
            )));
        }
        let mut delta = d_out.to_owned();
        for l in (0..layers).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.layer_offset(l);
            let input = &cache.activations[l];
            {
                let (gw, gb) = grad[off..off + i * o + o].split_at_mut(i * o);
                let mut gw = ArrayViewMut2::from_shape((i, o), gw).unwrap();
                general_mat_mul(1.0, &input.t(), &delta, 1.0, &mut gw);
                for (g, d) in gb.iter_mut().zip(delta.sum_axis(Axis(0)).iter()) {
                    *g += d;
                }
            }
            if l > 0 {
                let (w, _) = self.layer(l);
                let mut prev = delta.dot(&w.t());
                ndarray::Zip::from(&mut prev)
                    .and(input)
                    .for_each(|d, a| {
                        if *a <= 0.0 {
                            *d = 0.0;
                        }
                    });
                delta = prev;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_output_layer_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = MlpParams::init(&[3, 5, 2], 0.0, &mut rng).unwrap();
        let out = p.forward_one(&[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = MlpParams::init(&[3, 8, 8, 2], 1.0, &mut rng).unwrap();
        let x = [0.1, 0.2, -0.3];
        let a = p.forward_one(&x).unwrap();
        let b = p.forward_one(&x).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = MlpParams::init(&[2, 4, 2], 1.0, &mut rng).unwrap();
        let x = array![[0.7, -0.4], [0.1, 0.9], [-0.5, -0.2]];
        // loss = sum(c * output) for a fixed random c
        let c = array![[0.3, -1.2], [0.8, 0.5], [-0.7, 0.2]];
        let cache = p.forward_cached(x.view()).unwrap();
        let mut grad = vec![0.0; p.num_params()];
        p.backward(&cache, c.view(), &mut grad).unwrap();
        let h = 1e-5;
        for k in 0..p.num_params() {
            let mut plus = p.clone();
            plus.as_mut_slice()[k] += h;
            let mut minus = p.clone();
            minus.as_mut_slice()[k] -= h;
            let f = |q: &MlpParams| (q.forward(x.view()).unwrap() * &c).sum();
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            let denom = fd.abs().max(grad[k].abs()).max(1e-8);
            assert!((fd - grad[k]).abs() / denom < 1e-5, "param {k}: fd {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn shape_errors() {
        let p = MlpParams::zeros(&[3, 2]).unwrap();
        assert!(p.forward_one(&[1.0]).is_err());
        assert!(MlpParams::zeros(&[3]).is_err());
        assert!(MlpParams::from_parts(vec![2, 2], vec![0.0; 5]).is_err());
    }
}
