//! Small numerical helpers shared across the crate.

/// Compensated (Kahan) accumulator. Summation order is part of the contract:
/// callers feed terms in a fixed order so results are bit-stable run to run.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    s: f64,
    c: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.s + y;
        self.c = (t - self.s) - y;
        self.s = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.s
    }
}

/// Vertex of the parabola through three points. Returns (x, y, curvature);
/// curvature > 0 means a minimum. Falls back to the middle point when the
/// three are collinear.
pub fn parabola_vertex(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64)) -> (f64, f64, f64) {
    let (x0, y0) = p0;
    let (x1, y1) = p1;
    let (x2, y2) = p2;
    let d1 = (y1 - y0) / (x1 - x0);
    let d2 = (y2 - y1) / (x2 - x1);
    let a = (d2 - d1) / (x2 - x0);
    if a == 0.0 || !a.is_finite() {
        return (x1, y1, 0.0);
    }
    // p(x) = y0 + d1 (x - x0) + a (x - x0)(x - x1)
    let xv = 0.5 * (x0 + x1) - d1 / (2.0 * a);
    let yv = y0 + d1 * (xv - x0) + a * (xv - x0) * (xv - x1);
    (xv, yv, 2.0 * a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_recovers_small_terms() {
        let mut s = KahanSum::new();
        s.add(1.0);
        for _ in 0..10_000 {
            s.add(1e-17);
        }
        assert!((s.value() - (1.0 + 1e-13)).abs() < 1e-15);
    }

    #[test]
    fn parabola_vertex_exact() {
        // y = 2 (x - 0.3)^2 + 0.7
        let f = |x: f64| 2.0 * (x - 0.3) * (x - 0.3) + 0.7;
        let (x, y, c) = parabola_vertex((0.0, f(0.0)), (0.25, f(0.25)), (0.6, f(0.6)));
        assert!((x - 0.3).abs() < 1e-14);
        assert!((y - 0.7).abs() < 1e-14);
        assert!((c - 4.0).abs() < 1e-12);
    }

    #[test]
    fn parabola_vertex_collinear_falls_back() {
        let (x, y, c) = parabola_vertex((0.0, 1.0), (1.0, 2.0), (2.0, 3.0));
        assert_eq!((x, y, c), (1.0, 2.0, 0.0));
    }
}
