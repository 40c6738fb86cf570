use crate::error::{Error, Result};

/// Mean Euclidean distance from each point to its `k` nearest other points.
/// When fewer than `k` other points exist, all of them are used.
pub fn knn_distances(points: &[(f64, f64)], k: usize) -> Result<Vec<f64>> {
    if points.len() < 2 {
        return Err(Error::input(format!(
            "k-NN distances need at least 2 points, got {}",
            points.len()
        )));
    }
    if k == 0 {
        return Err(Error::input("k must be >= 1"));
    }
    let k = k.min(points.len() - 1);
    let mut dists = Vec::with_capacity(points.len() - 1);
    Ok(points
        .iter()
        .enumerate()
        .map(|(i, &(xi, yi))| {
            dists.clear();
            dists.extend(
                points
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &(xj, yj))| ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt()),
            );
            dists.select_nth_unstable_by(k - 1, f64::total_cmp);
            let nearest = &mut dists[..k];
            nearest.sort_unstable_by(f64::total_cmp);
            nearest.iter().sum::<f64>() / k as f64
        })
        .collect())
}
