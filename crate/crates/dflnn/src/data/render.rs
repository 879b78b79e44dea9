//! Minimal deterministic renderer for the pixel-pendulum task: an
//! anti-aliased rod on a 30x50 grayscale canvas.

pub const PIXEL_WIDTH: usize = 30;
pub const PIXEL_HEIGHT: usize = 50;
pub const PIXEL_DIM: usize = PIXEL_WIDTH * PIXEL_HEIGHT;

const PIVOT_X: f64 = PIXEL_WIDTH as f64 / 2.0;
const PIVOT_Y: f64 = 5.0;
const ROD_LEN: f64 = 40.0;
const ROD_RADIUS: f64 = 1.5;
const AA_WIDTH: f64 = 1.0;

/// Render the pendulum at angle `theta` (measured from the downward
/// vertical; positive angles swing toward +x). Returns a row-major
/// `PIXEL_HEIGHT x PIXEL_WIDTH` frame with intensities in `[0, 1]`.
pub fn render_pendulum(theta: f64) -> Vec<f64> {
    let (s, c) = theta.sin_cos();
    let tip_x = PIVOT_X + ROD_LEN * s;
    let tip_y = PIVOT_Y + ROD_LEN * c;
    let mut frame = vec![0.0; PIXEL_DIM];
    for py in 0..PIXEL_HEIGHT {
        for px in 0..PIXEL_WIDTH {
            let x = px as f64 + 0.5;
            let y = py as f64 + 0.5;
            let d = dist_to_segment(x, y, PIVOT_X, PIVOT_Y, tip_x, tip_y);
            let v = ((ROD_RADIUS + AA_WIDTH - d) / AA_WIDTH).clamp(0.0, 1.0);
            frame[py * PIXEL_WIDTH + px] = v;
        }
    }
    frame
}

fn dist_to_segment(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    let (dx, dy) = (bx - ax, by - ay);
    let len_sq = dx * dx + dy * dy;
    let t = (((px - ax) * dx + (py - ay) * dy) / len_sq).clamp(0.0, 1.0);
    let (cx, cy) = (ax + t * dx, ay + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}
