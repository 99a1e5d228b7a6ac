//! Small raster helpers shared by the scattering front-end and the pipeline.

use ndarray::Array2;

/// Bilinear resize with pixel-center alignment and edge clamping.
pub fn resize_bilinear(src: &Array2<f64>, new_rows: usize, new_cols: usize) -> Array2<f64> {
    let (rows, cols) = src.dim();
    if (rows, cols) == (new_rows, new_cols) {
        return src.clone();
    }
    let sr = rows as f64 / new_rows as f64;
    let sc = cols as f64 / new_cols as f64;
    Array2::from_shape_fn((new_rows, new_cols), |(i, j)| {
        let y = ((i as f64 + 0.5) * sr - 0.5).clamp(0.0, rows as f64 - 1.0);
        let x = ((j as f64 + 0.5) * sc - 0.5).clamp(0.0, cols as f64 - 1.0);
        let y0 = y.floor() as usize;
        let x0 = x.floor() as usize;
        let y1 = (y0 + 1).min(rows - 1);
        let x1 = (x0 + 1).min(cols - 1);
        let fy = y - y0 as f64;
        let fx = x - x0 as f64;
        src[[y0, x0]] * (1.0 - fy) * (1.0 - fx)
            + src[[y0, x1]] * (1.0 - fy) * fx
            + src[[y1, x0]] * fy * (1.0 - fx)
            + src[[y1, x1]] * fy * fx
    })
}

/// Pads an image symmetrically (whole-point reflection) so both dimensions
/// become multiples of `m`; padding is split as evenly as possible.
pub fn pad_reflect_to_multiple(src: &Array2<f64>, m: usize) -> Array2<f64> {
    let (rows, cols) = src.dim();
    let pr = (m - rows % m) % m;
    let pc = (m - cols % m) % m;
    if pr == 0 && pc == 0 {
        return src.clone();
    }
    let (top, left) = (pr / 2, pc / 2);
    let (nr, nc) = (rows + pr, cols + pc);
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        loop {
            if i < 0 {
                i = -i;
            } else if i >= n {
                i = 2 * n - 2 - i;
            } else {
                return i as usize;
            }
        }
    };
    Array2::from_shape_fn((nr, nc), |(i, j)| {
        src[[
            reflect(i as isize - top as isize, rows),
            reflect(j as isize - left as isize, cols),
        ]]
    })
}
