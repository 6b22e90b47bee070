use std::sync::OnceLock;

/// Orthonormal 8-point DCT-II basis, `basis[u][x]`.
fn basis() -> &'static [[f32; 8]; 8] {
    static BASIS: OnceLock<[[f32; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut m = [[0f32; 8]; 8];
        for (u, row) in m.iter_mut().enumerate() {
            let c = if u == 0 { (0.5f64).sqrt() } else { 1.0 };
            for (x, v) in row.iter_mut().enumerate() {
                let angle = (2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0;
                *v = (0.5 * c * angle.cos()) as f32;
            }
        }
        m
    })
}

/// Forward 2-D DCT of a level-shifted 8x8 block (natural order in and out).
pub fn forward(block: &[f32; 64]) -> [f32; 64] {
    let d = basis();
    let mut tmp = [0f32; 64];
    // rows: tmp[y][u] = sum_x d[u][x] * f[y][x]
    for y in 0..8 {
        for u in 0..8 {
            let mut acc = 0.0;
            for x in 0..8 {
                acc += d[u][x] * block[y * 8 + x];
            }
            tmp[y * 8 + u] = acc;
        }
    }
    let mut out = [0f32; 64];
    for v in 0..8 {
        for u in 0..8 {
            let mut acc = 0.0;
            for y in 0..8 {
                acc += d[v][y] * tmp[y * 8 + u];
            }
            out[v * 8 + u] = acc;
        }
    }
    out
}

/// Inverse 2-D DCT (natural order in and out).
pub fn inverse(coef: &[f32; 64]) -> [f32; 64] {
    let d = basis();
    let mut tmp = [0f32; 64];
    // columns: tmp[y][u] = sum_v d[v][y] * F[v][u]
    for y in 0..8 {
        for u in 0..8 {
            let mut acc = 0.0;
            for v in 0..8 {
                acc += d[v][y] * coef[v * 8 + u];
            }
            tmp[y * 8 + u] = acc;
        }
    }
    let mut out = [0f32; 64];
    for y in 0..8 {
        for x in 0..8 {
            let mut acc = 0.0;
            for u in 0..8 {
                acc += d[u][x] * tmp[y * 8 + u];
            }
            out[y * 8 + x] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        let mut block = [0f32; 64];
        for (i, v) in block.iter_mut().enumerate() {
            *v = ((i * 37) % 255) as f32 - 128.0;
        }
        let back = inverse(&forward(&block));
        for (a, b) in block.iter().zip(&back) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn constant_block_has_only_dc() {
        let block = [10f32; 64];
        let c = forward(&block);
        // orthonormal scaling: DC = 8 * mean
        assert!((c[0] - 80.0).abs() < 1e-4);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-4));
    }
}
