"""Per-window feature construction: local encoders, file ingestion, alignment."""

from .align import ALIGN_TARGETS, AlignParams, align_dims
from .bundle import Batch, FeatureBundle, FileFeatureSource, ResidueEmbedder, stack_bundles, stream_dims
from .embfile import EmbeddingFile, load_embedding, write_embedding_file
from .encoders import AMINO_ACIDS, encode_aaindex, encode_blosum62, encode_pseaac, pseaac_vector
from .records import SampleRecord, read_dataset_tsv, read_fasta, window_at, write_dataset_tsv
