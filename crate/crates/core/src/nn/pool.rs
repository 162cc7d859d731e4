use crate::geom::Grid2D;

/// Stride-1, same-size 3x3 max pooling of every channel; border cells pool
/// over their existing neighbors only.
pub fn maxpool2d_3x3_same(x: &Grid2D) -> Grid2D {
    let mut out = Grid2D::zeros(x.height, x.width, x.channels);
    for r in 0..x.height {
        let r0 = r.saturating_sub(1);
        let r1 = (r + 1).min(x.height - 1);
        for c in 0..x.width {
            let c0 = c.saturating_sub(1);
            let c1 = (c + 1).min(x.width - 1);
            for ch in 0..x.channels {
                let mut m = f64::NEG_INFINITY;
                for rr in r0..=r1 {
                    for cc in c0..=c1 {
                        m = m.max(x.get(rr, cc, ch));
                    }
                }
                out.set(r, c, ch, m);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_plane_unchanged() {
        let g = Grid2D::filled(4, 5, 1, 0.3);
        assert_eq!(maxpool2d_3x3_same(&g), g);
    }

    #[test]
    fn spike_spreads_to_block() {
        let mut g = Grid2D::zeros(5, 5, 1);
        g.set(2, 2, 0, 7.0);
        let p = maxpool2d_3x3_same(&g);
        for r in 0..5 {
            for c in 0..5 {
                let inside = (1..=3).contains(&r) && (1..=3).contains(&c);
                assert_eq!(p.get(r, c, 0), if inside { 7.0 } else { 0.0 });
            }
        }
    }
}
