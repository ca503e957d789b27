//! Fixed-order Gauss–Legendre rules for smooth integrands away from singularities.

const NODES: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];

const WEIGHTS: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_4,
    0.219_086_362_515_982,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

/// Ten-point rule on `[a, b]`: `(node, weight)` pairs.
pub fn gauss10(a: f64, b: f64) -> [(f64, f64); 10] {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut out = [(0.0, 0.0); 10];
    for k in 0..5 {
        out[2 * k] = (mid - half * NODES[k], half * WEIGHTS[k]);
        out[2 * k + 1] = (mid + half * NODES[k], half * WEIGHTS[k]);
    }
    out
}

/// Integral of `f` over `[a, b]` with one ten-point panel.
pub fn integrate_1d(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    gauss10(a, b).iter().map(|&(x, w)| w * f(x)).sum()
}

/// Integral of `f` over `[a0, b0] x [a1, b1]` with a 10 x 10 tensor rule.
pub fn integrate_2d(lo: [f64; 2], hi: [f64; 2], f: impl Fn(f64, f64) -> f64) -> f64 {
    let gx = gauss10(lo[0], hi[0]);
    let gy = gauss10(lo[1], hi[1]);
    let mut s = 0.0;
    for &(y, wy) in &gy {
        for &(x, wx) in &gx {
            s += wx * wy * f(x, y);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_degree_19() {
        let v = integrate_1d(-1.0, 2.0, |x| x.powi(19));
        let exact = (2f64.powi(20) - 1.0) / 20.0;
        assert!((v - exact).abs() < 1e-9 * exact);
        assert!((WEIGHTS.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn tensor_rule() {
        let v = integrate_2d([0.0, 0.0], [1.0, 2.0], |x, y| x * x * y);
        assert!((v - 2.0 / 3.0).abs() < 1e-14);
    }
}
