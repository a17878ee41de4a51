use super::CorpusError;

/// Token id. Plain `usize` so ids index embedding rows directly.
pub type TokenId = usize;

/// The 20 canonical amino acids followed by the five ambiguous/rare codes.
pub const RESIDUES: &[u8; 25] = b"ACDEFGHIKLMNPQRSTVWYXBZUO";
pub const NUM_SENTINELS: usize = 128;

pub const PAD_ID: TokenId = 0;
pub const EOS_ID: TokenId = 1;
const FIRST_RESIDUE_ID: TokenId = 2;

/// Fixed protein vocabulary: `pad=0`, `eos=1`, residues `2..=26`, and
/// sentinels allocated downward from the top id (`sentinel_0 = 154`).
#[derive(Debug, Clone)]
pub struct Vocabulary {
    lookup: [Option<TokenId>; 128],
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut lookup = [None; 128];
        for (i, &b) in RESIDUES.iter().enumerate() {
            lookup[b as usize] = Some(FIRST_RESIDUE_ID + i);
        }
        Self { lookup }
    }

    pub const fn size(&self) -> usize {
        FIRST_RESIDUE_ID + RESIDUES.len() + NUM_SENTINELS
    }

    pub const fn pad_id(&self) -> TokenId {
        PAD_ID
    }

    pub const fn eos_id(&self) -> TokenId {
        EOS_ID
    }

    /// Id of `sentinel_k`. Indices at or beyond the pool size wrap modulo 128.
    pub fn sentinel_id(&self, k: usize) -> TokenId {
        self.size() - 1 - (k % NUM_SENTINELS)
    }

    pub fn sentinel_index(&self, id: TokenId) -> Option<usize> {
        let lowest = self.size() - NUM_SENTINELS;
        (id >= lowest && id < self.size()).then(|| self.size() - 1 - id)
    }

    pub fn is_sentinel(&self, id: TokenId) -> bool {
        self.sentinel_index(id).is_some()
    }

    pub fn is_residue(&self, id: TokenId) -> bool {
        (FIRST_RESIDUE_ID..FIRST_RESIDUE_ID + RESIDUES.len()).contains(&id)
    }

    pub fn residue_ids(&self) -> std::ops::Range<TokenId> {
        FIRST_RESIDUE_ID..FIRST_RESIDUE_ID + RESIDUES.len()
    }

    pub fn residue_id(&self, symbol: char) -> Option<TokenId> {
        if symbol.is_ascii() {
            self.lookup[symbol as usize]
        } else {
            None
        }
    }

    pub fn residue_symbol(&self, id: TokenId) -> Option<char> {
        self.is_residue(id)
            .then(|| RESIDUES[id - FIRST_RESIDUE_ID] as char)
    }

    /// Encodes a residue string, one token per residue. Empty input is rejected.
    pub fn encode(&self, sequence: &str) -> Result<Vec<TokenId>, CorpusError> {
        if sequence.is_empty() {
            return Err(CorpusError::EmptyInput);
        }
        self.encode_allow_empty(sequence)
    }

    pub fn encode_allow_empty(&self, sequence: &str) -> Result<Vec<TokenId>, CorpusError> {
        sequence
            .chars()
            .enumerate()
            .map(|(position, symbol)| {
                self.residue_id(symbol)
                    .ok_or(CorpusError::UnknownSymbol { symbol, position })
            })
            .collect()
    }

    /// Decodes residue ids back to a string. Any non-residue id is an error.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String, CorpusError> {
        ids.iter()
            .enumerate()
            .map(|(position, &id)| {
                self.residue_symbol(id)
                    .ok_or(CorpusError::NotAResidue { id, position })
            })
            .collect()
    }

    /// Human-readable token name: residue letter, `<pad>`, `</s>` or `<sK>`.
    pub fn token_name(&self, id: TokenId) -> String {
        if let Some(c) = self.residue_symbol(id) {
            c.to_string()
        } else if id == PAD_ID {
            "<pad>".into()
        } else if id == EOS_ID {
            "</s>".into()
        } else if let Some(k) = self.sentinel_index(id) {
            format!("<s{k}>")
        } else {
            format!("<unk:{id}>")
        }
    }

    /// Space-separated token names, e.g. `A B <s0> D`.
    pub fn render(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&id| self.token_name(id))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Inverse of [`Vocabulary::token_name`].
    pub fn parse_token(&self, name: &str) -> Option<TokenId> {
        match name {
            "<pad>" => Some(PAD_ID),
            "</s>" => Some(EOS_ID),
            _ => {
                if let Some(k) = name.strip_prefix("<s").and_then(|r| r.strip_suffix('>')) {
                    let k: usize = k.parse().ok()?;
                    (k < NUM_SENTINELS).then(|| self.sentinel_id(k))
                } else {
                    let mut chars = name.chars();
                    let c = chars.next()?;
                    if chars.next().is_some() {
                        return None;
                    }
                    self.residue_id(c)
                }
            }
        }
    }
}
