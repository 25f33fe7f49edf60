//! Optimal one-to-one assignment (Hungarian method, O(n³)).

/// Weight slack that separates otherwise-tied optima. Lower (row, col)
/// indices win ties; small enough to never override a real IoU difference.
const TIE_EPS: f64 = 1e-9;

/// Maximum-weight matching on a rectangular `rows × cols` weight matrix.
///
/// Pairs whose weight is below `min_weight` are never matched. Returns
/// `(row, col)` pairs sorted by row.
pub fn max_weight_matching(weights: &[Vec<f64>], min_weight: f64) -> Vec<(usize, usize)> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let scale = 1.0 / (rows + cols) as f64;
    let gated = |r: usize, c: usize| -> f64 {
        let w = weights[r][c];
        if w >= min_weight && w > 0.0 {
            w - TIE_EPS * (r + c) as f64 * scale
        } else {
            0.0
        }
    };
    // solve with rows <= cols
    let transpose = rows > cols;
    let (n, m) = if transpose { (cols, rows) } else { (rows, cols) };
    let cost = |i: usize, j: usize| -> f64 {
        if transpose {
            -gated(j, i)
        } else {
            -gated(i, j)
        }
    };

    // 1-based potentials formulation
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| p[j] != 0)
        .map(|j| {
            let (i, j) = (p[j] - 1, j - 1);
            if transpose {
                (j, i)
            } else {
                (i, j)
            }
        })
        .filter(|&(r, c)| weights[r][c] >= min_weight && weights[r][c] > 0.0)
        .collect();
    pairs.sort_unstable();
    pairs
}
