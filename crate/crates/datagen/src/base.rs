use forgenet_imaging::ImageRgb8;
use rand::Rng;

/// Smooth lattice noise in `[0, 1]` with the given cell size.
fn value_noise(rng: &mut impl Rng, h: usize, w: usize, cell: usize) -> Vec<f32> {
    let gh = h / cell + 2;
    let gw = w / cell + 2;
    let grid: Vec<f32> = (0..gh * gw).map(|_| rng.random()).collect();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let fy = y as f32 / cell as f32;
        let (iy, ty) = (fy as usize, fy.fract());
        let sy = ty * ty * (3.0 - 2.0 * ty);
        for x in 0..w {
            let fx = x as f32 / cell as f32;
            let (ix, tx) = (fx as usize, fx.fract());
            let sx = tx * tx * (3.0 - 2.0 * tx);
            let g = |a: usize, b: usize| grid[a * gw + b];
            let top = g(iy, ix) + (g(iy, ix + 1) - g(iy, ix)) * sx;
            let bot = g(iy + 1, ix) + (g(iy + 1, ix + 1) - g(iy + 1, ix)) * sx;
            out.push(top + (bot - top) * sy);
        }
    }
    out
}

/// Random colour pulled halfway towards its own grey level.
fn muted_colour(rng: &mut impl Rng) -> [f32; 3] {
    let c: [f32; 3] = [rng.random(), rng.random(), rng.random()];
    let l = (c[0] + c[1] + c[2]) / 3.0;
    c.map(|v| l + 0.5 * (v - l))
}

/// Texture image built from multi-octave noise, a colour gradient and a few
/// flat or textured shapes.
pub fn procedural_base(rng: &mut impl Rng, h: usize, w: usize) -> ImageRgb8 {
    let n = h * w;
    let mut planes = [vec![0f32; n], vec![0f32; n], vec![0f32; n]];
    let c0 = muted_colour(rng);
    let c1 = muted_colour(rng);
    let angle: f32 = rng.random_range(0.0..std::f32::consts::TAU);
    let (ca, sa) = (angle.cos(), angle.sin());
    let span = (h + w) as f32;
    // coarse octaves carry colour; fine detail is shared across channels
    // like luminance texture in photographs
    let coarse_min = 8;
    let mut fine = vec![0f32; n];
    {
        let mut amp = 0.5;
        let mut cell = (h.max(w) / 4).max(4);
        while cell >= 2 {
            if cell < coarse_min {
                let noise = value_noise(rng, h, w, cell);
                for (a, v) in fine.iter_mut().zip(noise) {
                    *a += amp * (v - 0.5);
                }
            }
            amp *= 0.5;
            cell /= 2;
        }
    }
    for ch in 0..3 {
        let mut acc = fine.clone();
        let mut amp = 0.5;
        let mut cell = (h.max(w) / 4).max(4);
        while cell >= coarse_min {
            let noise = value_noise(rng, h, w, cell);
            for (a, v) in acc.iter_mut().zip(noise) {
                *a += amp * (v - 0.5);
            }
            amp *= 0.5;
            cell /= 2;
        }
        for y in 0..h {
            for x in 0..w {
                let t = ((x as f32 * ca + y as f32 * sa) / span + 0.5).clamp(0.0, 1.0);
                let i = y * w + x;
                planes[ch][i] = c0[ch] + (c1[ch] - c0[ch]) * t + 0.6 * acc[i];
            }
        }
    }
    let shapes = rng.random_range(3..9);
    for _ in 0..shapes {
        let color = muted_colour(rng);
        let cy = rng.random_range(0.0..h as f32);
        let cx = rng.random_range(0.0..w as f32);
        let r = rng.random_range(0.04..0.2) * h.min(w) as f32;
        let disc = rng.random_bool(0.5);
        let grain = rng.random_range(0.0..0.04f32);
        for y in 0..h {
            for x in 0..w {
                let (dy, dx) = (y as f32 - cy, x as f32 - cx);
                let inside = if disc {
                    dy * dy + dx * dx <= r * r
                } else {
                    dy.abs() <= r && dx.abs() <= 0.7 * r
                };
                if inside {
                    let i = y * w + x;
                    let g = grain * (rng.random::<f32>() - 0.5);
                    for ch in 0..3 {
                        planes[ch][i] = color[ch] + g;
                    }
                }
            }
        }
    }
    ImageRgb8::from_fn(h, w, |y, x| {
        let i = y * w + x;
        let q = |v: f32| (v * 255.0 + 0.5).clamp(0.0, 255.0) as u8;
        [q(planes[0][i]), q(planes[1][i]), q(planes[2][i])]
    })
    .expect("base dims are positive")
}
