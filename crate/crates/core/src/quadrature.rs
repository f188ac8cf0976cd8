//! Composite Gauss-Kronrod integration on a fixed grid.

/// Kronrod nodes on [-1, 1]: positive half, descending, then zero.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

/// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

pub const NODES_PER_SEGMENT: usize = 15;

/// Number of equal-width segments used on `[0, T]`.
pub const SEGMENTS: usize = 7;

/// Nodes and weights of a composite rule over `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Embedded Gauss weights (zero on Kronrod-only nodes), for error estimates.
    pub gauss_weights: Vec<f64>,
}

impl Rule {
    pub fn new(a: f64, b: f64, segments: usize) -> Self {
        let n = segments * NODES_PER_SEGMENT;
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut gauss_weights = Vec::with_capacity(n);
        let h = (b - a) / segments as f64;
        for s in 0..segments {
            let lo = a + h * s as f64;
            let c = lo + h / 2.0;
            let r = h / 2.0;
            for k in 0..15 {
                let (x, w, wg) = match k {
                    0..=6 => (-XGK[k], WGK[k], gauss_weight(k)),
                    7 => (0.0, WGK[7], WG[3]),
                    _ => {
                        let j = 14 - k;
                        (XGK[j], WGK[j], gauss_weight(j))
                    }
                };
                nodes.push(c + r * x);
                weights.push(r * w);
                gauss_weights.push(r * wg);
            }
        }
        Self {
            nodes,
            weights,
            gauss_weights,
        }
    }

    /// Default rule on `[0, t]`.
    pub fn on(t: f64) -> Self {
        Self::new(0.0, t, SEGMENTS)
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// |Kronrod - Gauss| summed over the grid.
    pub fn error_estimate(&self, values: &[f64]) -> f64 {
        let g: f64 = self.gauss_weights.iter().zip(values).map(|(w, v)| w * v).sum();
        (self.integrate(values) - g).abs()
    }
}

fn gauss_weight(k: usize) -> f64 {
    if k % 2 == 1 {
        WG[k / 2]
    } else {
        0.0
    }
}

/// Integrates `f` over `[a, b]` with the composite rule.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, segments: usize) -> f64 {
    let rule = Rule::new(a, b, segments);
    let v: Vec<f64> = rule.nodes.iter().map(|&x| f(x)).collect();
    rule.integrate(&v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_length() {
        let r = Rule::new(1.0, 4.0, 7);
        assert!((r.weights.iter().sum::<f64>() - 3.0).abs() < 1e-13);
        assert!((r.gauss_weights.iter().sum::<f64>() - 3.0).abs() < 1e-13);
        assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn exact_for_polynomials() {
        // Kronrod 15 integrates degree 22 exactly on each segment
        let v = integrate(|x| x.powi(20), 0.0, 1.0, 1);
        assert!((v - 1.0 / 21.0).abs() < 1e-14);
    }

    #[test]
    fn smooth_functions() {
        let v = integrate(f64::exp, 0.0, 3.0, SEGMENTS);
        assert!((v - (3f64.exp() - 1.0)).abs() / v < 1e-13);
        let v = integrate(|x| (1.0 + x).ln(), 0.0, 2.0, SEGMENTS);
        let exact = 3.0 * 3f64.ln() - 2.0;
        assert!((v - exact).abs() < 1e-13);
    }
}
