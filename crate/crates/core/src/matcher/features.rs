//! Hashed character n-gram features over the serialized pair.
//!
//! Each attribute's value is broken into character n-grams per side; every
//! n-gram becomes a hashed feature tagged by whether it occurs on both sides,
//! only the left, or only the right. A handful of per-attribute overlap
//! statistics are hashed into the same space, so the feature vector has no
//! schema-dependent layout.

use std::collections::BTreeSet;

use crate::dataset::{CandidatePair, Record};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseFeatures {
    /// Sorted, deduplicated bucket indices with their values.
    pub entries: Vec<(u32, f32)>,
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut hash = FNV_OFFSET;
    for part in parts {
        for &byte in *part {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(FNV_PRIME);
        }
        // separator so ("ab","c") and ("a","bc") differ
        hash ^= 0xff;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

fn ngrams(value: &str, n: usize) -> BTreeSet<String> {
    let normalized: Vec<char> = format!(" {} ", value.trim().to_lowercase()).chars().collect();
    let mut grams = BTreeSet::new();
    if value.trim().is_empty() {
        return grams;
    }
    if normalized.len() <= n {
        grams.insert(normalized.iter().collect());
        return grams;
    }
    for window in normalized.windows(n) {
        grams.insert(window.iter().collect());
    }
    grams
}

fn words(value: &str) -> BTreeSet<String> {
    value
        .split(|c: char| !c.is_alphanumeric() && c != '.')
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

fn overlap<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> (f32, f32) {
    if a.is_empty() || b.is_empty() {
        return (0.0, 0.0);
    }
    let inter = a.intersection(b).count() as f32;
    let union = (a.len() + b.len()) as f32 - inter;
    (inter / union, inter / a.len().min(b.len()) as f32)
}

fn numeric_similarity(a: &str, b: &str) -> Option<f32> {
    let x: f64 = a.trim().parse().ok()?;
    let y: f64 = b.trim().parse().ok()?;
    let scale = x.abs().max(y.abs());
    if scale == 0.0 {
        return Some(1.0);
    }
    Some((1.0 - (x - y).abs() / scale).max(0.0) as f32)
}

fn attribute_names(left: &Record, right: &Record) -> Vec<String> {
    let mut names: Vec<String> = left.attributes.iter().map(|(n, _)| n.clone()).collect();
    for (name, _) in &right.attributes {
        if !names.contains(name) {
            names.push(name.clone());
        }
    }
    names
}

pub fn featurize(pair: &CandidatePair, space: usize, n: usize) -> SparseFeatures {
    let bucket = |parts: &[&[u8]]| (fnv1a(parts) % space as u64) as u32;
    let mut grams: Vec<(u32, f32)> = Vec::new();
    let mut stats: Vec<(u32, f32)> = Vec::new();

    let mut all_left = BTreeSet::new();
    let mut all_right = BTreeSet::new();
    for name in attribute_names(&pair.left, &pair.right) {
        let lv = pair.left.get(&name).unwrap_or("");
        let rv = pair.right.get(&name).unwrap_or("");
        let lg = ngrams(lv, n);
        let rg = ngrams(rv, n);
        for gram in lg.union(&rg) {
            let tag: &[u8] = match (lg.contains(gram), rg.contains(gram)) {
                (true, true) => b"both",
                (true, false) => b"left",
                _ => b"right",
            };
            grams.push((bucket(&[tag, gram.as_bytes()]), 1.0));
            grams.push((bucket(&[tag, name.as_bytes(), gram.as_bytes()]), 1.0));
        }

        let (jaccard, containment) = overlap(&lg, &rg);
        let lw = words(lv);
        let rw = words(rv);
        let (word_jaccard, word_containment) = overlap(&lw, &rw);
        let key = name.as_bytes();
        stats.push((bucket(&[b"stat:jaccard", key]), jaccard));
        stats.push((bucket(&[b"stat:containment", key]), containment));
        stats.push((bucket(&[b"stat:word_jaccard", key]), word_jaccard));
        stats.push((bucket(&[b"stat:word_containment", key]), word_containment));
        stats.push((bucket(&[b"stat:exact", key]), (!lv.is_empty() && lv.trim().eq_ignore_ascii_case(rv.trim())) as u8 as f32));
        stats.push((bucket(&[b"stat:missing", key]), (lv.trim().is_empty() != rv.trim().is_empty()) as u8 as f32));
        if let Some(sim) = numeric_similarity(lv, rv) {
            stats.push((bucket(&[b"stat:numeric", key]), sim));
        }
        all_left.extend(lw);
        all_right.extend(rw);
    }
    let (jaccard, containment) = overlap(&all_left, &all_right);
    stats.push((bucket(&[b"stat:all_word_jaccard"]), jaccard));
    stats.push((bucket(&[b"stat:all_word_containment"]), containment));
    stats.push((bucket(&[b"bias"]), 1.0));

    // n-gram block scaled to unit norm; statistics keep their [0, 1] values
    let norm = (grams.len() as f32).sqrt().max(1.0);
    for g in &mut grams {
        g.1 /= norm;
    }
    grams.extend(stats);
    grams.sort_by_key(|(i, _)| *i);
    let mut entries: Vec<(u32, f32)> = Vec::with_capacity(grams.len());
    for (i, v) in grams {
        match entries.last_mut() {
            Some(last) if last.0 == i => last.1 += v,
            _ => entries.push((i, v)),
        }
    }
    entries.retain(|(_, v)| *v != 0.0);
    SparseFeatures { entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Record;

    fn pair(l: &str, r: &str) -> CandidatePair {
        CandidatePair {
            pair_id: "0".into(),
            left: Record::new("l", vec![("title".into(), l.into())]),
            right: Record::new("r", vec![("title".into(), r.into())]),
            ground_truth: None,
        }
    }

    #[test]
    fn features_are_sorted_unique_and_in_range() {
        let f = featurize(&pair("sony camera", "sony camera kit"), 1 << 12, 3);
        assert!(f.entries.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(f.entries.iter().all(|(i, v)| (*i as usize) < (1 << 12) && v.is_finite()));
    }

    #[test]
    fn identical_sides_only_produce_shared_grams() {
        let same = featurize(&pair("abc def", "abc def"), 1 << 20, 3);
        let left_only = fnv1a(&[b"left", " ab".as_bytes()]) % (1 << 20);
        assert!(!same.entries.iter().any(|(i, _)| *i as u64 == left_only));
        let shared = fnv1a(&[b"both", " ab".as_bytes()]) % (1 << 20);
        assert!(same.entries.iter().any(|(i, _)| *i as u64 == shared));
    }

    #[test]
    fn overlap_statistics() {
        let a: BTreeSet<_> = ["a", "b", "c"].into_iter().collect();
        let b: BTreeSet<_> = ["b", "c"].into_iter().collect();
        assert_eq!(overlap(&a, &b), (2.0 / 3.0, 1.0));
        assert_eq!(numeric_similarity("10", "8"), Some(0.8));
        assert_eq!(numeric_similarity("x", "8"), None);
    }
}
