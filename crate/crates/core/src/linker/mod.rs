//! Pairs HTML pages with the image records they link to.
//!
//! Pass 1 indexes image responses by normalized URI. Pass 2 streams pages,
//! resolves their `<img src>` links and fetches matching images by location.

mod html;
mod index;
mod join;
mod uri;

use thiserror::Error;

use crate::warc::WarcError;

pub use html::{decode_entities, extract_image_links, start_tags, StartTags, Tag};
pub use index::{build_uri_index, UriIndex};
pub use join::{join_pairs, JoinStats, PairJoiner, PairedSample};
pub use uri::{normalize, remove_dot_segments, resolve_uri, UriParts};

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("cannot resolve reference: {0}")]
    UnresolvableReference(String),
    #[error("malformed index line {0}")]
    BadIndexLine(usize),
    #[error(transparent)]
    Warc(#[from] WarcError),
}
