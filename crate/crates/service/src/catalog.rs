//! Item metadata shown on question and recommendation cards.

use std::collections::HashMap;
use std::io::{BufRead, Read};

use gslim::ItemSet;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemCard {
    /// Internal item index; the id used by the session API.
    pub id: usize,
    pub external_id: u64,
    pub title: String,
    pub year: Option<u16>,
    pub genres: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poster_url: Option<String>,
    #[serde(rename = "abstract", default, skip_serializing_if = "Option::is_none")]
    pub abstract_text: Option<String>,
}

/// Cards indexed by internal item index. Items of the model that the catalog
/// does not describe have no card and are never served.
#[derive(Clone, Debug, Default)]
pub struct Catalog {
    cards: Vec<Option<ItemCard>>,
}

#[derive(Deserialize)]
struct MovieRow {
    #[serde(rename = "movieId")]
    movie_id: u64,
    title: String,
    genres: String,
}

#[derive(Deserialize)]
struct SidecarRow {
    #[serde(rename = "movieId")]
    movie_id: u64,
    #[serde(default)]
    poster_url: Option<String>,
    #[serde(rename = "abstract", default)]
    abstract_text: Option<String>,
}

/// Splits `"Heat (1995)"` into `("Heat", Some(1995))`.
pub fn split_title(raw: &str) -> (String, Option<u16>) {
    let t = raw.trim();
    if let Some(open) = t.rfind('(') {
        let inner = &t[open + 1..];
        if let Some(year) = inner.strip_suffix(')') {
            if year.len() == 4 {
                if let Ok(y) = year.parse::<u16>() {
                    return (t[..open].trim_end().to_string(), Some(y));
                }
            }
        }
    }
    (t.to_string(), None)
}

fn csv_err(e: csv::Error) -> ServiceError {
    ServiceError::Catalog(e.to_string())
}

impl Catalog {
    /// Reads a `movieId,title,genres` file and keeps the movies that appear
    /// in `item_ids` (external ids by internal index).
    pub fn from_movies_csv<R: Read>(source: R, item_ids: &[u64]) -> Result<Self, ServiceError> {
        let index: HashMap<u64, usize> = item_ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
        let mut cards = vec![None; item_ids.len()];
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
        for row in rdr.deserialize::<MovieRow>() {
            let row = row.map_err(csv_err)?;
            let Some(&id) = index.get(&row.movie_id) else {
                continue;
            };
            let (title, year) = split_title(&row.title);
            let genres = row
                .genres
                .split('|')
                .map(str::trim)
                .filter(|g| !g.is_empty() && *g != "(no genres listed)")
                .map(String::from)
                .collect();
            cards[id] = Some(ItemCard {
                id,
                external_id: row.movie_id,
                title,
                year,
                genres,
                poster_url: None,
                abstract_text: None,
            });
        }
        let missing = cards.iter().filter(|c| c.is_none()).count();
        if missing > 0 {
            log::warn!("{missing} model items have no catalog entry and will not be shown");
        }
        Ok(Catalog { cards })
    }

    /// Merges a `movieId,poster_url,abstract` sidecar; both columns optional.
    pub fn with_sidecar<R: Read>(mut self, source: R) -> Result<Self, ServiceError> {
        let index: HashMap<u64, usize> = self
            .cards
            .iter()
            .flatten()
            .map(|c| (c.external_id, c.id))
            .collect();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
        for row in rdr.deserialize::<SidecarRow>() {
            let row = row.map_err(csv_err)?;
            if let Some(card) = index.get(&row.movie_id).and_then(|&i| self.cards[i].as_mut()) {
                card.poster_url = row.poster_url.filter(|s| !s.is_empty());
                card.abstract_text = row.abstract_text.filter(|s| !s.is_empty());
            }
        }
        Ok(self)
    }

    pub fn num_items(&self) -> usize {
        self.cards.len()
    }

    pub fn card(&self, id: usize) -> Option<&ItemCard> {
        self.cards.get(id).and_then(Option::as_ref)
    }

    /// Items that have a card.
    pub fn described(&self) -> ItemSet {
        ItemSet::from_items(
            self.cards.len(),
            self.cards.iter().enumerate().filter(|c| c.1.is_some()).map(|c| c.0),
        )
    }
}

/// External ids, one per line; blank lines and `#` comments are skipped.
pub fn read_id_list<R: BufRead>(source: R) -> Result<Vec<u64>, ServiceError> {
    let mut ids = Vec::new();
    for (k, line) in source.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let id = t
            .parse()
            .map_err(|_| ServiceError::Catalog(format!("id list line {}: bad id {t:?}", k + 1)))?;
        ids.push(id);
    }
    Ok(ids)
}

/// Items that may be asked or recommended: described by the catalog, in the
/// allowlist when one is given, and not in the blocklist.
pub fn item_pool(catalog: &Catalog, item_ids: &[u64], allow: Option<&[u64]>, block: &[u64]) -> ItemSet {
    let mut pool = catalog.described();
    let index: HashMap<u64, usize> = item_ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
    if let Some(allow) = allow {
        let keep = ItemSet::from_items(item_ids.len(), allow.iter().filter_map(|id| index.get(id).copied()));
        pool = pool.intersection(&keep);
    }
    for id in block {
        if let Some(&i) = index.get(id) {
            pool.remove(i);
        }
    }
    pool
}
