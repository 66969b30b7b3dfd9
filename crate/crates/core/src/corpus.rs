//! Message generators: passages of a text corpus, random word sequences and
//! uniform random bytes, each capped at a token limit.
//!
//! With the byte tokenizer one byte is one token, so limits are byte counts.

use alloc::string::String;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::rng::{below, seeded_stream};

/// Where a message comes from.
#[derive(Debug, Clone, Copy)]
pub enum MessageSource<'a> {
    /// Contiguous passages of this text.
    Text(&'a [u8]),
    /// Space-joined draws from this wordlist.
    Words(&'a [String]),
    RandomBytes,
}

impl MessageSource<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            MessageSource::Text(_) => "text_file",
            MessageSource::Words(_) => "random_words",
            MessageSource::RandomBytes => "random_bytes",
        }
    }
}

/// One message of at most `token_limit` tokens, deterministic in `seed`.
pub fn sample_message(source: &MessageSource<'_>, token_limit: usize, seed: u64) -> Result<Vec<u8>> {
    let mut rng = seeded_stream(seed);
    sample_message_with(source, token_limit, &mut rng)
}

pub fn sample_message_with<R: RngCore + ?Sized>(
    source: &MessageSource<'_>,
    token_limit: usize,
    rng: &mut R,
) -> Result<Vec<u8>> {
    if token_limit == 0 {
        return Err(Error::Config("token_limit must be >= 1".into()));
    }
    match source {
        MessageSource::Text(text) => text_passage(text, token_limit, rng),
        MessageSource::Words(words) => random_words(words, token_limit, rng),
        MessageSource::RandomBytes => Ok(random_bytes(token_limit, rng)),
    }
}

/// Exactly `n` uniform bytes.
pub fn random_bytes<R: RngCore + ?Sized>(n: usize, rng: &mut R) -> Vec<u8> {
    let mut out = alloc::vec![0u8; n];
    rng.fill_bytes(&mut out);
    out
}

/// Uniform wordlist draws joined by single spaces, appended while the result
/// stays within `limit` bytes.
pub fn random_words<R: RngCore + ?Sized>(words: &[String], limit: usize, rng: &mut R) -> Result<Vec<u8>> {
    if words.is_empty() {
        return Err(Error::EmptyInput("wordlist is empty".into()));
    }
    let shortest = words.iter().map(String::len).min().unwrap_or(0);
    if shortest == 0 {
        return Err(Error::EmptyInput("wordlist contains an empty word".into()));
    }
    let mut out = Vec::new();
    loop {
        let word = words[below(rng, words.len() as u64) as usize].as_bytes();
        let sep = usize::from(!out.is_empty());
        if out.len() + sep + word.len() > limit {
            // one more attempt could fit a shorter word; stop once nothing can
            if out.len() + sep + shortest > limit {
                break;
            }
            continue;
        }
        if sep == 1 {
            out.push(b' ');
        }
        out.extend_from_slice(word);
    }
    Ok(out)
}

/// A passage of `limit` bytes starting at a random word boundary, or the
/// whole text when it is shorter than `limit`.
pub fn text_passage<R: RngCore + ?Sized>(text: &[u8], limit: usize, rng: &mut R) -> Result<Vec<u8>> {
    if text.is_empty() {
        return Err(Error::EmptyInput("text corpus is empty".into()));
    }
    if text.len() <= limit {
        return Ok(text.to_vec());
    }
    let last_start = text.len() - limit;
    let starts: Vec<usize> = (0..=last_start)
        .filter(|&i| !text[i].is_ascii_whitespace() && (i == 0 || text[i - 1].is_ascii_whitespace()))
        .collect();
    let start = if starts.is_empty() { 0 } else { starts[below(rng, starts.len() as u64) as usize] };
    Ok(text[start..start + limit].to_vec())
}

/// Distinct words of `text` in order of first appearance, split on anything
/// that is not alphanumeric or an apostrophe.
pub fn wordlist_from_text(text: &str) -> Vec<String> {
    let mut seen = alloc::collections::BTreeSet::new();
    let mut out = Vec::new();
    for word in text.split(|c: char| !(c.is_alphanumeric() || c == '\'')) {
        let word = word.trim_matches('\'');
        if !word.is_empty() && seen.insert(word) {
            out.push(String::from(word));
        }
    }
    out
}

/// Parses a newline-separated wordlist, skipping blank lines.
pub fn parse_wordlist(text: &str) -> Vec<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::vec;

    const TEXT: &[u8] = b"The quick brown fox jumps over the lazy dog. The dog, being lazy, sleeps.";

    #[test]
    fn random_bytes_have_exact_length_and_are_seeded() {
        let a = sample_message(&MessageSource::RandomBytes, 100, 7).unwrap();
        assert_eq!(a.len(), 100);
        assert_eq!(a, sample_message(&MessageSource::RandomBytes, 100, 7).unwrap());
        assert_ne!(a, sample_message(&MessageSource::RandomBytes, 100, 8).unwrap());
    }

    #[test]
    fn random_bytes_are_uniform() {
        // chi-square with 255 degrees of freedom; 310.46 is the 0.99 quantile
        let mut rng = seeded_stream(11);
        let bytes = random_bytes(1_000_000, &mut rng);
        let mut counts = [0u64; 256];
        for b in bytes {
            counts[b as usize] += 1;
        }
        let expected = 1_000_000.0 / 256.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 310.46, "chi2 {chi2}");
    }

    #[test]
    fn random_words_are_wordlist_members_within_limit() {
        let words = wordlist_from_text(core::str::from_utf8(TEXT).unwrap());
        for seed in 0..50 {
            let limit = 1 + seed as usize * 3;
            let msg = sample_message(&MessageSource::Words(&words), limit, seed).unwrap();
            assert!(msg.len() <= limit);
            let s = core::str::from_utf8(&msg).unwrap();
            if !s.is_empty() {
                assert!(s.split(' ').all(|w| words.iter().any(|x| x == w)), "{s:?}");
            }
        }
        let msg = sample_message(&MessageSource::Words(&words), 100, 3).unwrap();
        assert!(msg.len() > 90);
    }

    #[test]
    fn text_passages_start_at_word_boundaries() {
        for seed in 0..30 {
            let msg = sample_message(&MessageSource::Text(TEXT), 20, seed).unwrap();
            assert_eq!(msg.len(), 20);
            let pos = TEXT.windows(20).position(|w| w == &msg[..]).unwrap();
            assert!(pos == 0 || TEXT[pos - 1] == b' ');
        }
        assert_eq!(sample_message(&MessageSource::Text(b"short"), 20, 0).unwrap(), b"short".to_vec());
    }

    #[test]
    fn empty_sources_are_rejected() {
        assert!(sample_message(&MessageSource::Text(b""), 5, 0).is_err());
        assert!(sample_message(&MessageSource::Words(&[]), 5, 0).is_err());
        assert!(sample_message(&MessageSource::RandomBytes, 0, 0).is_err());
    }

    #[test]
    fn wordlist_extraction_dedups() {
        let words = wordlist_from_text("The dog, the dog's bone; the 'end'.");
        assert_eq!(words, vec!["The", "dog", "the", "dog's", "bone", "end"]);
        assert_eq!(parse_wordlist("a\n\n b \nc"), vec!["a", "b", "c"]);
    }
}
