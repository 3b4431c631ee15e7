//! Names of the reserved tokens that never come out of subword segmentation.

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
pub const READ_BOUNDARY: &str = "@readBoundary";

pub const LENGTH_PREFIX: &str = "@len";
pub const ENTITY_PREFIX: &str = "@entity";
pub const SOURCE_PREFIX: &str = "@genSource";

pub const NUM_LENGTH_BINS: usize = 10;

pub fn length_token(bin: usize) -> String {
    format!("{LENGTH_PREFIX}{bin}")
}

pub fn entity_token(k: usize) -> String {
    format!("{ENTITY_PREFIX}{k}")
}

pub fn source_token(style: usize) -> String {
    format!("{SOURCE_PREFIX}{style}")
}

fn numbered(token: &str, prefix: &str) -> Option<usize> {
    let digits = token.strip_prefix(prefix)?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if digits.len() > 1 && digits.starts_with('0') {
        return None;
    }
    digits.parse().ok()
}

pub fn parse_entity(token: &str) -> Option<usize> {
    numbered(token, ENTITY_PREFIX)
}

pub fn parse_length(token: &str) -> Option<usize> {
    numbered(token, LENGTH_PREFIX)
}

pub fn parse_source(token: &str) -> Option<usize> {
    numbered(token, SOURCE_PREFIX)
}

pub fn is_entity_token(token: &str) -> bool {
    parse_entity(token).is_some()
}

/// True for every control or special token.
pub fn is_reserved(token: &str) -> bool {
    matches!(token, PAD | BOS | EOS | UNK | READ_BOUNDARY)
        || parse_entity(token).is_some()
        || parse_length(token).is_some()
        || parse_source(token).is_some()
}
