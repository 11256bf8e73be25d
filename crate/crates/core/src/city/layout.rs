//! Deterministic stress layout for cities whose data carries no coordinates.

use super::generate::VEHICLE_SPEED;

const ITERATIONS: usize = 300;

/// Places nodes so Euclidean distances approximate `times * VEHICLE_SPEED`.
///
/// Starts from a circle ordered by node index and runs localized stress
/// majorization; no randomness is involved.
pub fn stress_layout(n: usize, times: &[f64]) -> Vec<[f64; 2]> {
    let target = |i: usize, j: usize| times[i * n + j] * VEHICLE_SPEED;
    let radius = (0..n).map(|j| target(0, j)).fold(1.0, f64::max) / 2.0;
    let mut pos: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / n as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect();
    for _ in 0..ITERATIONS {
        for i in 0..n {
            let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
            for j in 0..n {
                let d = target(i, j);
                if i == j || d <= 0.0 {
                    continue;
                }
                let w = 1.0 / (d * d);
                let (dx, dy) = (pos[i][0] - pos[j][0], pos[i][1] - pos[j][1]);
                let norm = (dx * dx + dy * dy).sqrt().max(1e-9);
                sx += w * (pos[j][0] + d * dx / norm);
                sy += w * (pos[j][1] + d * dy / norm);
                sw += w;
            }
            if sw > 0.0 {
                pos[i] = [sx / sw, sy / sw];
            }
        }
    }
    // shift into the positive quadrant
    let minx = pos.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let miny = pos.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    pos.iter().map(|p| [p[0] - minx, p[1] - miny]).collect()
}
