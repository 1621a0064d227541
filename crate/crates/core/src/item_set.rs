/// A subset of the item universe `0..num_items`, stored as a mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ItemSet {
    mask: Vec<bool>,
    len: usize,
}

impl ItemSet {
    pub fn empty(num_items: usize) -> Self {
        ItemSet {
            mask: vec![false; num_items],
            len: 0,
        }
    }

    pub fn full(num_items: usize) -> Self {
        ItemSet {
            mask: vec![true; num_items],
            len: num_items,
        }
    }

    /// Items outside the universe are ignored.
    pub fn from_items(num_items: usize, items: impl IntoIterator<Item = usize>) -> Self {
        let mut set = Self::empty(num_items);
        for i in items {
            if i < num_items {
                set.insert(i);
            }
        }
        set
    }

    pub fn universe(&self) -> usize {
        self.mask.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, item: usize) -> bool {
        self.mask.get(item).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, item: usize) -> bool {
        let fresh = !self.mask[item];
        if fresh {
            self.mask[item] = true;
            self.len += 1;
        }
        fresh
    }

    pub fn remove(&mut self, item: usize) -> bool {
        let present = self.contains(item);
        if present {
            self.mask[item] = false;
            self.len -= 1;
        }
        present
    }

    /// Members in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
    }

    pub fn intersection(&self, other: &ItemSet) -> ItemSet {
        ItemSet::from_items(self.universe(), self.iter().filter(|&i| other.contains(i)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_remove_track_len() {
        let mut s = ItemSet::empty(4);
        assert!(s.insert(2));
        assert!(!s.insert(2));
        s.insert(0);
        assert_eq!(s.len(), 2);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 2]);
        assert!(s.remove(2));
        assert!(!s.remove(3));
        assert_eq!(s.len(), 1);
        assert!(!s.contains(17));
    }
}
