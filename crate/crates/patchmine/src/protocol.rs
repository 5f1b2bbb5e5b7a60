//! Text protocols: the `<GEN>` generation trigger with `<h>...</h>`
//! caption wrapping, the OCR reference-token suffix, and the GPT-4 query
//! assembly templates.
//!
//! All transforms are stateless string functions. Grammar errors carry
//! byte offsets and map to their own error type because the CLI reports
//! them with a dedicated exit code.

use serde::Serialize;
use thiserror::Error;

pub const GEN_TRIGGER: &str = "<GEN>";
pub const CAPTION_OPEN: &str = "<h>";
pub const CAPTION_CLOSE: &str = "</h>";
pub const OCR_PREFIX: &str = "Reference OCR token:";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    /// `<GEN>` present but no well-formed `<h>...</h>` block after it.
    #[error(
        "malformed generation directive: trigger at byte {trigger_offset} has no <h>...</h> block"
    )]
    MalformedDirective { trigger_offset: usize },

    /// `<h>` after the trigger never closes.
    #[error("unterminated caption: <h> at byte {open_offset} has no </h>")]
    UnterminatedCaption { open_offset: usize },

    /// Captions may not contain `<` or `>`.
    #[error("caption contains forbidden character {found:?} at byte {position}")]
    CaptionCharset { position: usize, found: char },

    /// The OCR token list must be non-empty.
    #[error("no OCR tokens to append")]
    EmptyTokenList,

    /// OCR tokens may not be empty or contain commas/newlines.
    #[error("OCR token {index} contains a forbidden character or is empty")]
    TokenCharset { index: usize },

    /// Wrong in-context example arity for a query-assembly task.
    #[error("{what}: expected {expected} entries, got {got}")]
    Arity {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

pub type ProtocolResult<T> = std::result::Result<T, ProtocolError>;

/// Result of stripping generation markup from a model response.
///
/// `spans` are byte ranges of the removed markup in the original string;
/// deleting those ranges from the original reproduces `text` exactly, so
/// reinserting the removed bytes at the span offsets reconstructs the
/// original byte for byte.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParsedOutput {
    pub text: String,
    pub directive: Option<String>,
    pub spans: Vec<(usize, usize)>,
}

/// Extract the generation directive, if any.
///
/// The first `<GEN>` arms the parser; the first `<h>...</h>` block after
/// it carries the directive. Trigger and block are excised; when only
/// whitespace separates them it is excised too (one contiguous span),
/// otherwise the in-between text survives and two spans are recorded.
/// Later triggers or blocks are left verbatim.
pub fn parse_generation(input: &str) -> ProtocolResult<ParsedOutput> {
    let Some(trigger_at) = input.find(GEN_TRIGGER) else {
        return Ok(ParsedOutput {
            text: input.to_string(),
            directive: None,
            spans: Vec::new(),
        });
    };
    let after_trigger = trigger_at + GEN_TRIGGER.len();
    let rest = &input[after_trigger..];
    let Some(open_rel) = rest.find(CAPTION_OPEN) else {
        return Err(ProtocolError::MalformedDirective {
            trigger_offset: trigger_at,
        });
    };
    let open_at = after_trigger + open_rel;
    let body_start = open_at + CAPTION_OPEN.len();
    let Some(close_rel) = input[body_start..].find(CAPTION_CLOSE) else {
        return Err(ProtocolError::UnterminatedCaption {
            open_offset: open_at,
        });
    };
    let close_at = body_start + close_rel;
    let block_end = close_at + CAPTION_CLOSE.len();
    let directive = input[body_start..close_at].to_string();

    let between = &input[after_trigger..open_at];
    let mut spans = Vec::new();
    if between.chars().all(char::is_whitespace) {
        spans.push((trigger_at, block_end));
    } else {
        spans.push((trigger_at, after_trigger));
        spans.push((open_at, block_end));
    }

    let mut text = String::with_capacity(input.len());
    let mut cursor = 0;
    for &(start, end) in &spans {
        text.push_str(&input[cursor..start]);
        cursor = end;
    }
    text.push_str(&input[cursor..]);

    Ok(ParsedOutput {
        text,
        directive: Some(directive),
        spans,
    })
}

/// Append a generation directive to a reply:
/// `reply + " <GEN> <h>" + caption + "</h>"`.
///
/// Captions may not contain `<` or `>`, so parsing the result recovers
/// (reply, caption) exactly (reply up to the separating space).
pub fn emit_generation(reply: &str, caption: &str) -> ProtocolResult<String> {
    if let Some((position, found)) = caption.char_indices().find(|(_, c)| *c == '<' || *c == '>') {
        return Err(ProtocolError::CaptionCharset { position, found });
    }
    Ok(format!(
        "{reply} {GEN_TRIGGER} {CAPTION_OPEN}{caption}{CAPTION_CLOSE}"
    ))
}

/// Render the OCR suffix for a token list:
/// `"\n" + "Reference OCR token:" + tokens joined by ","`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OcrAugmentation {
    pub tokens: Vec<String>,
    pub rendered: String,
}

impl OcrAugmentation {
    pub fn new(tokens: Vec<String>) -> ProtocolResult<Self> {
        if tokens.is_empty() {
            return Err(ProtocolError::EmptyTokenList);
        }
        for (index, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.contains(',') || tok.contains('\n') {
                return Err(ProtocolError::TokenCharset { index });
            }
        }
        let rendered = format!("\n{OCR_PREFIX}{}", tokens.join(","));
        Ok(OcrAugmentation { tokens, rendered })
    }

    /// Split a rendered suffix back into its token list.
    pub fn parse_suffix(suffix: &str) -> Option<Vec<String>> {
        let body = suffix.strip_prefix('\n')?.strip_prefix(OCR_PREFIX)?;
        Some(body.split(',').map(str::to_string).collect())
    }
}

/// Append the OCR reference suffix to a conversation.
pub fn append_ocr_tokens(conversation: &str, tokens: &[String]) -> ProtocolResult<String> {
    let aug = OcrAugmentation::new(tokens.to_vec())?;
    Ok(format!("{conversation}{}", aug.rendered))
}

/// The two GPT-4 data-assembly tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenTask {
    /// Invert a descriptive caption into a short user query plus an
    /// SD-style target caption.
    Recaption,
    /// Produce an SD prompt suited to a conversation context.
    Incontext,
}

const RECAPTION_HEADER: &str = "Task: given the descriptive image caption below, infer the short \
user instruction that could have produced it and rewrite the caption as a Stable Diffusion \
text-to-image prompt.";
const INCONTEXT_HEADER: &str = "Task: given the conversation below, produce a Stable Diffusion \
text-to-image prompt for an image that suits the conversation.";

/// Assemble a GPT-4 query from fixed headers and numbered in-context
/// blocks. Both tasks take exactly 5 SD example prompts; the recaption
/// task additionally requires exactly 3 query templates (the incontext
/// task ignores that argument). Byte-stable for fixed inputs.
pub fn assemble_gpt4_query(
    task: GenTask,
    payload: &str,
    sd_examples: &[String],
    query_templates: &[String],
) -> ProtocolResult<String> {
    if sd_examples.len() != 5 {
        return Err(ProtocolError::Arity {
            what: "SD example prompts",
            expected: 5,
            got: sd_examples.len(),
        });
    }
    if task == GenTask::Recaption && query_templates.len() != 3 {
        return Err(ProtocolError::Arity {
            what: "query templates",
            expected: 3,
            got: query_templates.len(),
        });
    }

    let mut out = String::new();
    out.push_str(match task {
        GenTask::Recaption => RECAPTION_HEADER,
        GenTask::Incontext => INCONTEXT_HEADER,
    });
    out.push_str("\n\nExample captions:\n");
    for (i, ex) in sd_examples.iter().enumerate() {
        out.push_str(&format!("{}. {ex}\n", i + 1));
    }
    if task == GenTask::Recaption {
        out.push_str("\nQuery templates:\n");
        for (i, t) in query_templates.iter().enumerate() {
            out.push_str(&format!("{}. {t}\n", i + 1));
        }
    }
    if !payload.is_empty() {
        out.push('\n');
        out.push_str(payload);
        out.push('\n');
    }
    Ok(out)
}
