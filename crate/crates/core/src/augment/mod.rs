//! LLM annotation and text encoding.
//!
//! Item prompts ask for a preference summary, three levels of tags, and
//! parent -> child tag edges; user prompts condense a user's train-split
//! item summaries. Both clients have HTTP transports and deterministic
//! offline mocks.

mod batch;
mod encoder;
mod llm;
mod prompt;

pub use batch::{annotate_corpus, encode_items, encode_users, summarize_corpus, user_prompt_inputs};
pub use encoder::{
    hash_slot, read_hyps, sidecar_path, tokens, write_hyps, EmbedBackend, EncoderClient, HttpEmbed, MockEncoder,
    HYPS_MAGIC, HYPS_VERSION,
};
pub use llm::{ChatBackend, ChatRequest, HttpChat, LlmClient, MockAnnotator, Outcome, API_KEY_VAR};
pub use prompt::{
    format_item_response, item_information, parse_item_response, parse_user_response, render_item_prompt,
    render_user_prompt, ParsedItem, ITEM_TEMPLATE, TEMPLATE_VERSION, USER_TEMPLATE,
};
