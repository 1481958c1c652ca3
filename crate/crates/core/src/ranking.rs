use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::catalog::{CorpusScope, EntityKind};

/// 1-based positions of an entity in the lexical and dense input rankings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SourceRanks {
    pub lexical: Option<usize>,
    pub dense: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntity {
    pub entity_id: String,
    pub kind: EntityKind,
    pub score: f64,
    /// Position of the entity in its corpus (agents first, then tools).
    pub ordinal: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_ranks: Option<SourceRanks>,
}

/// Entities ordered by descending score, ties by ascending ordinal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub scope: CorpusScope,
    items: Vec<ScoredEntity>,
}

pub(crate) fn rank_order(a: &ScoredEntity, b: &ScoredEntity) -> Ordering {
    b.score.total_cmp(&a.score).then(a.ordinal.cmp(&b.ordinal))
}

impl RankedList {
    /// Sorts `items` into rank order. Panics on a non-finite score or a
    /// repeated ordinal.
    pub fn from_unsorted(scope: CorpusScope, mut items: Vec<ScoredEntity>) -> Self {
        assert!(
            items.iter().all(|e| e.score.is_finite()),
            "ranked scores must be finite"
        );
        let mut seen = std::collections::HashSet::with_capacity(items.len());
        assert!(
            items.iter().all(|e| seen.insert(e.ordinal)),
            "ranked list contains a duplicate entity"
        );
        items.sort_by(rank_order);
        RankedList { scope, items }
    }

    /// Builds a list whose order is taken as given, e.g. a hand-written `L`
    /// for exercising agent selection. Scores are not required to be sorted.
    pub fn from_ordered(scope: CorpusScope, items: Vec<ScoredEntity>) -> Self {
        RankedList { scope, items }
    }

    pub fn empty(scope: CorpusScope) -> Self {
        RankedList {
            scope,
            items: Vec::new(),
        }
    }

    pub fn items(&self) -> &[ScoredEntity] {
        &self.items
    }

    pub fn into_items(self) -> Vec<ScoredEntity> {
        self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn truncate(&mut self, n: usize) {
        self.items.truncate(n);
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ScoredEntity> {
        self.items.iter()
    }
}

impl<'a> IntoIterator for &'a RankedList {
    type Item = &'a ScoredEntity;
    type IntoIter = std::slice::Iter<'a, ScoredEntity>;

    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str, ordinal: usize, score: f64) -> ScoredEntity {
        ScoredEntity {
            entity_id: id.into(),
            kind: EntityKind::Tool,
            score,
            ordinal,
            source_ranks: None,
        }
    }

    #[test]
    fn sorts_by_score_then_ordinal() {
        let list = RankedList::from_unsorted(
            CorpusScope::Joint,
            vec![item("c", 2, 0.5), item("a", 0, 0.5), item("b", 1, 0.9)],
        );
        let ids: Vec<_> = list.iter().map(|e| e.entity_id.as_str()).collect();
        assert_eq!(ids, ["b", "a", "c"]);
    }

    #[test]
    #[should_panic(expected = "finite")]
    fn rejects_nan() {
        RankedList::from_unsorted(CorpusScope::Joint, vec![item("a", 0, f64::NAN)]);
    }
}
