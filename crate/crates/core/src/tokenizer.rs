//! Hashing tokenizer shared by the toy model and the lexicon extractor:
//! lowercase, split on anything that is not alphanumeric, FNV-1a hash into
//! a fixed bucket count. Token id 0 is reserved for the null token that
//! stands in for an empty text.

pub const DEFAULT_VOCAB: usize = 4096;
pub const NULL_TOKEN: usize = 0;

/// Lowercased word tokens; empty texts yield an empty list.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

/// Hashed token ids in [0, vocab). Empty texts map to the single null token
/// so every text produces at least one embedding row.
pub fn token_ids(text: &str, vocab: usize) -> Vec<usize> {
    assert!(vocab >= 2, "vocab must leave room for the null token");
    let toks = tokenize(text);
    if toks.is_empty() {
        return vec![NULL_TOKEN];
    }
    toks.iter().map(|t| hash_token(t, vocab)).collect()
}

/// FNV-1a over the UTF-8 bytes, folded into buckets 1..vocab (0 is reserved).
pub fn hash_token(token: &str, vocab: usize) -> usize {
    1 + (fnv1a(token.as_bytes()) % (vocab as u64 - 1)) as usize
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercases_and_splits_on_punctuation() {
        assert_eq!(
            tokenize("Happy, happy... Sad-day!"),
            vec!["happy", "happy", "sad", "day"]
        );
    }

    #[test]
    fn empty_text_becomes_null_token() {
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(token_ids("", 64), vec![NULL_TOKEN]);
        assert_eq!(token_ids("  ...  ", 64), vec![NULL_TOKEN]);
    }

    #[test]
    fn ids_are_stable_and_in_range() {
        let a = token_ids("the quick brown fox", DEFAULT_VOCAB);
        let b = token_ids("the quick brown fox", DEFAULT_VOCAB);
        assert_eq!(a, b);
        assert!(a.iter().all(|&id| (1..DEFAULT_VOCAB).contains(&id)));
    }

    #[test]
    fn same_token_same_id() {
        let ids = token_ids("walk walk walked", 512);
        assert_eq!(ids[0], ids[1]);
        assert_ne!(ids[0], ids[2]);
    }
}
