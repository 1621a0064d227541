#![allow(dead_code)]

use std::sync::Arc;

use gslim::greedy::{train_greedy, GreedyOptions};
use gslim::lfm::{train_pure_svd, SvdOptions};
use gslim::synthetic::MovieLensLike;
use gslim::{HyperParams, InteractionMatrix};
use gslim_service::{item_pool, Catalog, Engine, ServiceConfig};

pub const NUM_ITEMS: usize = 60;
/// External id with no catalog row.
pub const UNDESCRIBED: u64 = 59;

pub fn data() -> InteractionMatrix {
    MovieLensLike {
        num_users: 150,
        num_items: NUM_ITEMS,
        mean_ratings_per_user: 14.0,
        min_ratings_per_user: 5,
        latent_dim: 4,
        seed: 3,
    }
    .generate()
}

pub fn movies_csv(x: &InteractionMatrix) -> String {
    let mut s = String::from("movieId,title,genres\n");
    for &id in x.item_ids() {
        if id != UNDESCRIBED {
            s.push_str(&format!("{id},\"Movie {id}, The ({})\",Drama|Comedy\n", 1980 + id % 40));
        }
    }
    s
}

pub fn engine_with(cfg: ServiceConfig, block: &[u64]) -> Engine {
    let x = data();
    let (model, _) = train_greedy(&x, HyperParams::new(1.0, 4.0).unwrap(), 30, GreedyOptions::default()).unwrap();
    let lfm = train_pure_svd(&x, 6, 1, SvdOptions::default()).unwrap();
    let catalog = Catalog::from_movies_csv(movies_csv(&x).as_bytes(), x.item_ids()).unwrap();
    let pool = item_pool(&catalog, x.item_ids(), None, block);
    Engine::new(&x, Arc::new(model), Arc::new(lfm), catalog, pool, cfg).unwrap()
}

pub fn engine() -> Engine {
    engine_with(ServiceConfig::default(), &[])
}

pub fn internal(external: u64) -> usize {
    data().item_index(external).unwrap()
}
