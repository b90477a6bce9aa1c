use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::ParamStore;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Parameters with more entries than this get a random subset of
    /// coordinates (of this size) checked instead of all of them.
    pub max_coords_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            max_coords_per_param: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub coords_checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Compares the gradients currently stored in `store` against central
/// differences of `loss`.
///
/// Relative error per coordinate is `|g_analytic − g_fd| / max(1, |g_fd|)`.
/// `store` is restored to its original values on return.
pub fn grad_check<F>(store: &mut ParamStore, mut loss: F, cfg: GradCheckConfig) -> GradCheckReport
where
    F: FnMut(&ParamStore) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut params = Vec::with_capacity(names.len());
    for name in names {
        let len = store.value(&name).map(|v| v.len()).unwrap_or(0);
        let coords: Vec<usize> = if len <= cfg.max_coords_per_param {
            (0..len).collect()
        } else {
            let mut c = sample(&mut rng, len, cfg.max_coords_per_param).into_vec();
            c.sort_unstable();
            c
        };
        let analytic: Vec<f64> = {
            let g = store.grad(&name).expect("name from store");
            coords.iter().map(|&c| g.data()[c]).collect()
        };
        let mut worst = 0.0f64;
        for (&c, &ga) in coords.iter().zip(&analytic) {
            let orig = store.value(&name).expect("name from store").data()[c];
            set_coord(store, &name, c, orig + cfg.eps);
            let plus = loss(store);
            set_coord(store, &name, c, orig - cfg.eps);
            let minus = loss(store);
            set_coord(store, &name, c, orig);
            let fd = (plus - minus) / (2.0 * cfg.eps);
            let rel = (ga - fd).abs() / fd.abs().max(1.0);
            worst = worst.max(rel);
        }
        params.push(ParamCheck {
            name,
            coords_checked: coords.len(),
            max_rel_error: worst,
        });
    }
    let max_rel_error = params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max);
    GradCheckReport {
        params,
        max_rel_error,
    }
}

fn set_coord(store: &mut ParamStore, name: &str, coord: usize, v: f64) {
    store
        .param_mut(name)
        .expect("name from store")
        .value
        .data_mut()[coord] = v;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn detects_a_wrong_gradient() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::from_rows(&[[1.0, 2.0]])).unwrap();
        let f = |s: &ParamStore| s.value("w").unwrap().data().iter().map(|v| v * v).sum();
        s.param_mut("w").unwrap().grad = Tensor::from_rows(&[[2.0, 4.0]]);
        let ok = grad_check(&mut s, f, GradCheckConfig::default());
        assert!(ok.max_rel_error < 1e-8);
        s.param_mut("w").unwrap().grad = Tensor::from_rows(&[[2.0, 5.0]]);
        let bad = grad_check(&mut s, f, GradCheckConfig::default());
        assert!(bad.max_rel_error > 0.2);
        assert_eq!(s.value("w").unwrap(), &Tensor::from_rows(&[[1.0, 2.0]]));
    }

    #[test]
    fn samples_large_parameters() {
        let mut s = ParamStore::new();
        s.insert("big", Tensor::full(20, 20, 0.5)).unwrap();
        let report = grad_check(
            &mut s,
            |s| s.value("big").unwrap().sum(),
            GradCheckConfig::default(),
        );
        assert_eq!(report.params[0].coords_checked, 64);
        // all-zero analytic gradient against true gradient 1
        assert!((report.max_rel_error - 1.0).abs() < 1e-6);
    }
}
