/// Continuation marker on non-initial pieces.
pub const CONTINUATION: &str = "##";

const CHUNK: usize = 4;

/// Splits a word into greedy chunks of at most four characters; every piece
/// after the first carries a `##` prefix.
pub fn toy_subword_tokenize(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    chars
        .chunks(CHUNK)
        .enumerate()
        .map(|(i, c)| {
            let piece: String = c.iter().collect();
            if i == 0 {
                piece
            } else {
                format!("{CONTINUATION}{piece}")
            }
        })
        .collect()
}

/// Index of each word's final piece in the concatenated piece sequence.
pub fn word_end_indices<S: AsRef<str>>(words: &[S]) -> (Vec<String>, Vec<u32>) {
    let mut pieces = Vec::new();
    let mut ends = Vec::with_capacity(words.len());
    for w in words {
        pieces.extend(toy_subword_tokenize(w.as_ref()));
        ends.push((pieces.len() - 1) as u32);
    }
    (pieces, ends)
}
