//! Deep Graph Infomax with a two-layer GIN encoder: aggregation, corruption,
//! readout, bilinear discriminator, BCE objective and the training loop.

mod encoder;
mod io;
mod objective;
mod train;

pub use encoder::{aggregate, BlockCache, EncoderCache, GinEncoder, GinLayer, LayerCache, MlpBlock, HIDDEN_DIM, NUM_LAYERS};
pub use io::{
    decode_params, encode_params, load_params, read_embeddings_csv, save_params, write_embeddings_csv, ENCODER_MAGIC,
};
pub use objective::{
    corrupt, corrupt_features, dgi_loss, discriminate, random_permutation, readout, DgiParams, DgiStep, SCORE_CLAMP,
};
pub use train::{
    embed_all, embed_graph, train_dgi, train_dgi_with, DgiConfig, DgiModel, EmbeddingTable, EpsMode, LossRecord,
    DEFAULT_EPOCHS,
};
