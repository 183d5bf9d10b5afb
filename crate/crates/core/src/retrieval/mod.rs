//! Asset database and the two-stage text → image retrieval sampler.

mod align;
mod db;
mod embed;
mod index;

pub use align::{align_orientation, AlignConfig, AlignStatus, Alignment};
pub use db::{load_db, load_db_with_mode, save_db, DB_FORMAT, DB_VERSION};
pub use embed::{embed_image, embed_text, fnv1a64, text_bin, tokenize, ImageEmbedding, ViewPrefix, EMBED_DIM};
pub use index::{
    retrieve, AssetRecord, EmbeddingIndex, IndexMode, PrefixEmbeddings, RetrievalConfig, RetrievalResult, ViewEmbedding,
};
