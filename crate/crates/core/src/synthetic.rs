//! Seeded synthetic rating data for tests, benchmarks and desk-scale runs.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{InteractionMatrix, Result};

/// Uniform random integer ratings 1..=5; each entry present with probability `density`.
pub fn ratings(num_users: usize, num_items: usize, density: f64, seed: u64) -> InteractionMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trip = Vec::new();
    for u in 0..num_users {
        for i in 0..num_items {
            if rng.random::<f64>() < density {
                trip.push((u, i, rng.random_range(1..=5) as f64));
            }
        }
    }
    InteractionMatrix::from_triplets(num_users, num_items, trip).expect("valid by construction")
}

/// Shape of a MovieLens-like data set.
#[derive(Clone, Copy, Debug)]
pub struct MovieLensLike {
    pub num_users: usize,
    pub num_items: usize,
    pub mean_ratings_per_user: f64,
    pub min_ratings_per_user: usize,
    pub latent_dim: usize,
    pub seed: u64,
}

impl MovieLensLike {
    /// 943 users, 1682 items, roughly 100k ratings.
    pub fn ml100k(seed: u64) -> Self {
        MovieLensLike {
            num_users: 943,
            num_items: 1682,
            mean_ratings_per_user: 106.0,
            min_ratings_per_user: 20,
            latent_dim: 8,
            seed,
        }
    }

    /// Popularity follows a Zipf-like curve, users pick items by popularity
    /// tilted toward their latent taste, and ratings come from a noisy
    /// low-rank model rounded to 1..=5.
    pub fn generate(&self) -> InteractionMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let d = self.latent_dim.max(1);
        let n = self.num_items;
        let gauss = |rng: &mut ChaCha8Rng, k: usize| -> Vec<f64> { (0..k).map(|_| normal.sample(rng)).collect() };

        let items: Vec<Vec<f64>> = (0..n).map(|_| gauss(&mut rng, d)).collect();
        let item_bias: Vec<f64> = (0..n).map(|_| 0.6 * normal.sample(&mut rng)).collect();
        // shuffle popularity ranks so popularity is not tied to the index
        let mut ranks: Vec<usize> = (0..n).collect();
        for k in (1..n).rev() {
            ranks.swap(k, rng.random_range(0..=k));
        }
        let popularity: Vec<f64> = ranks.iter().map(|&r| 1.0 / (r as f64 + 8.0).powf(1.1)).collect();

        let extra_mean = (self.mean_ratings_per_user - self.min_ratings_per_user as f64).max(0.0);
        let mut trip = Vec::new();
        for u in 0..self.num_users {
            let taste = gauss(&mut rng, d);
            let activity = normal.sample(&mut rng);
            // log-normal activity with the requested mean
            let extra = extra_mean * (0.9 * activity - 0.405).exp();
            let count = (self.min_ratings_per_user + extra.round() as usize).min(n);

            let affinity: Vec<f64> = items
                .iter()
                .map(|v| taste.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt())
                .collect();
            // weighted sampling without replacement via exponential keys
            let mut keyed: Vec<(f64, usize)> = (0..n)
                .map(|i| {
                    let weight = popularity[i] * (0.8 * affinity[i]).exp();
                    let e: f64 = -(1.0 - rng.random::<f64>()).ln();
                    (e / weight, i)
                })
                .collect();
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, i) in keyed.iter().take(count) {
                let raw = 3.5 + item_bias[i] + 0.9 * affinity[i] + 0.6 * normal.sample(&mut rng);
                trip.push((u, i, raw.round().clamp(1.0, 5.0)));
            }
        }
        let user_ids = (1..=self.num_users as u64).collect();
        let item_ids = (1..=n as u64).collect();
        InteractionMatrix::with_ids(user_ids, item_ids, trip).expect("valid by construction")
    }
}

/// Writes `userId,movieId,rating,timestamp` with a header, timestamps all 0.
pub fn write_movielens_csv<W: Write>(mut out: W, x: &InteractionMatrix) -> Result<()> {
    writeln!(out, "userId,movieId,rating,timestamp")?;
    for (u, i, r) in x.triplets() {
        writeln!(out, "{},{},{},0", x.user_ids()[u], x.item_ids()[i], r)?;
    }
    Ok(())
}

/// Writes a MovieLens `movies.csv` catalog with placeholder titles.
pub fn write_movies_csv<W: Write>(mut out: W, x: &InteractionMatrix) -> Result<()> {
    writeln!(out, "movieId,title,genres")?;
    for &id in x.item_ids() {
        writeln!(out, "{id},Movie {id} ({}),Drama", 1990 + id % 30)?;
    }
    Ok(())
}
