//! Instruction language: object-finding sentences, optional room hints
//! appended to them, and a fixed-vocabulary tokenizer.
//!
//! A base instruction names a colored object ("find the red ball"); an
//! enhanced instruction appends a room hint ("find the red ball, in the
//! kitchen"). Token sequences are fixed-length with id 0 reserved for
//! padding, and `encode`/`decode` round-trip exactly over the whole
//! sentence space.

use serde::{Deserialize, Serialize};

use crate::error::LangError;
use crate::floorplan::RoomId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
}

impl Color {
    pub const ALL: [Color; 4] = [Color::Red, Color::Green, Color::Blue, Color::Yellow];

    pub fn word(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
        }
    }

    pub fn rgb(self) -> [f64; 3] {
        match self {
            Color::Red => [0.95, 0.10, 0.10],
            Color::Green => [0.10, 0.90, 0.10],
            Color::Blue => [0.15, 0.15, 0.95],
            Color::Yellow => [0.95, 0.90, 0.10],
        }
    }

    fn from_word(w: &str) -> Option<Color> {
        Color::ALL.iter().copied().find(|c| c.word() == w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Box,
    Ball,
    Key,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Box, Shape::Ball, Shape::Key];

    pub fn word(self) -> &'static str {
        match self {
            Shape::Box => "box",
            Shape::Ball => "ball",
            Shape::Key => "key",
        }
    }

    fn from_word(w: &str) -> Option<Shape> {
        Shape::ALL.iter().copied().find(|s| s.word() == w)
    }
}

/// A base object-finding instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub color: Color,
    pub shape: Shape,
}

impl Instruction {
    pub const fn new(color: Color, shape: Shape) -> Self {
        Self { color, shape }
    }

    /// All 12 color-shape combinations, colors outer, shapes inner.
    pub fn all() -> Vec<Instruction> {
        let mut v = Vec::with_capacity(12);
        for c in Color::ALL {
            for s in Shape::ALL {
                v.push(Instruction::new(c, s));
            }
        }
        v
    }
}

/// The six object types used for training episodes.
pub const TRAIN_OBJECTS: [Instruction; 6] = [
    Instruction::new(Color::Red, Shape::Box),
    Instruction::new(Color::Green, Shape::Ball),
    Instruction::new(Color::Blue, Shape::Box),
    Instruction::new(Color::Yellow, Shape::Ball),
    Instruction::new(Color::Red, Shape::Key),
    Instruction::new(Color::Green, Shape::Key),
];

/// The six held-out object types (the complement of `TRAIN_OBJECTS`).
pub const HOLDOUT_OBJECTS: [Instruction; 6] = [
    Instruction::new(Color::Blue, Shape::Ball),
    Instruction::new(Color::Yellow, Shape::Box),
    Instruction::new(Color::Red, Shape::Ball),
    Instruction::new(Color::Green, Shape::Box),
    Instruction::new(Color::Blue, Shape::Key),
    Instruction::new(Color::Yellow, Shape::Key),
];

/// A room hint appended to an instruction. The corridor is not a legal
/// target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Enhancement {
    room: RoomId,
}

impl Enhancement {
    pub fn new(room: RoomId) -> Result<Enhancement, LangError> {
        if room.is_corridor() {
            return Err(LangError::CorridorTarget);
        }
        Ok(Enhancement { room })
    }

    pub fn room(self) -> RoomId {
        self.room
    }
}

/// An instruction with an optional room hint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnhancedInstruction {
    pub base: Instruction,
    pub enhancement: Option<Enhancement>,
}

impl EnhancedInstruction {
    pub fn plain(base: Instruction) -> Self {
        Self { base, enhancement: None }
    }

    pub fn with_room(base: Instruction, room: RoomId) -> Result<Self, LangError> {
        Ok(Self { base, enhancement: Some(Enhancement::new(room)?) })
    }
}

/// Fixed vocabulary. Index 0 is the pad token; indices are stable and are
/// the token ids.
pub const VOCAB: [&str; 19] = [
    "<pad>", "find", "the", "in", "red", "green", "blue", "yellow", "box", "ball", "key", "garage",
    "storage", "bedroom", "bathroom", "living", "dining", "kitchen", "room",
];

/// Fixed token-sequence length; the longest sentence uses all 8 slots.
pub const TOKEN_LEN: usize = 8;

pub const PAD: u16 = 0;

/// Fixed-length token sequence (pad-right).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq(pub [u16; TOKEN_LEN]);

impl TokenSeq {
    pub fn tokens(&self) -> &[u16; TOKEN_LEN] {
        &self.0
    }

    /// Number of non-pad tokens (pads only appear as a suffix).
    pub fn len_nonpad(&self) -> usize {
        self.0.iter().take_while(|&&t| t != PAD).count()
    }
}

fn word_id(w: &str) -> Result<u16, LangError> {
    VOCAB
        .iter()
        .position(|&v| v == w)
        .map(|i| i as u16)
        .ok_or_else(|| LangError::UnknownWord(w.to_string()))
}

/// Render an instruction as its canonical sentence.
pub fn format(instr: &EnhancedInstruction) -> String {
    let mut s = format!("find the {} {}", instr.base.color.word(), instr.base.shape.word());
    if let Some(e) = instr.enhancement {
        s.push_str(", in the ");
        s.push_str(&e.room().words().join(" "));
    }
    s
}

/// Parse a sentence produced by `format` (case-insensitive, commas
/// optional).
pub fn parse(text: &str) -> Result<EnhancedInstruction, LangError> {
    let cleaned = text.to_lowercase().replace(',', " ");
    let words: Vec<&str> = cleaned.split_whitespace().collect();
    let fail = |reason: &str| LangError::Parse { text: text.to_string(), reason: reason.to_string() };
    if words.len() < 4 {
        return Err(fail("expected at least 4 words"));
    }
    if words[0] != "find" || words[1] != "the" {
        return Err(fail("expected leading \"find the\""));
    }
    let color = Color::from_word(words[2]).ok_or_else(|| fail("unknown color"))?;
    let shape = Shape::from_word(words[3]).ok_or_else(|| fail("unknown shape"))?;
    let base = Instruction::new(color, shape);
    if words.len() == 4 {
        return Ok(EnhancedInstruction::plain(base));
    }
    if words.len() < 7 || words[4] != "in" || words[5] != "the" {
        return Err(fail("expected \", in the <room>\" after the object"));
    }
    let room_words = &words[6..];
    let room = RoomId::NAV
        .iter()
        .copied()
        .find(|r| r.words() == room_words)
        .ok_or_else(|| fail("unknown room"))?;
    EnhancedInstruction::with_room(base, room)
}

/// Tokenize an instruction into a fixed-length padded sequence.
pub fn encode(instr: &EnhancedInstruction) -> TokenSeq {
    let mut words: Vec<&str> = vec!["find", "the", instr.base.color.word(), instr.base.shape.word()];
    if let Some(e) = instr.enhancement {
        words.push("in");
        words.push("the");
        words.extend_from_slice(e.room().words());
    }
    debug_assert!(words.len() <= TOKEN_LEN);
    let mut toks = [PAD; TOKEN_LEN];
    for (i, w) in words.iter().enumerate() {
        toks[i] = word_id(w).expect("builder words are in vocabulary");
    }
    TokenSeq(toks)
}

/// Invert `encode`.
pub fn decode(seq: &TokenSeq) -> Result<EnhancedInstruction, LangError> {
    let mut words = Vec::new();
    let mut padding = false;
    for &t in seq.tokens() {
        if t as usize >= VOCAB.len() {
            return Err(LangError::BadToken(t));
        }
        if t == PAD {
            padding = true;
            continue;
        }
        if padding {
            return Err(LangError::Parse {
                text: format!("{:?}", seq.0),
                reason: "pad tokens must be a suffix".to_string(),
            });
        }
        words.push(VOCAB[t as usize]);
    }
    parse(&words.join(" "))
}

/// Digest of the vocabulary, stored in checkpoints so composed agents can
/// verify their parts agree on token meanings.
pub fn vocab_hash() -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for w in VOCAB {
        h.update(w.as_bytes());
        h.update([0u8]);
    }
    format!("{:x}", h.finalize())
}
