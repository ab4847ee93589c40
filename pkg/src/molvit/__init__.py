"""Vision-transformer captioning of molecule drawings into InChI-style strings."""

from molvit.attention import OpCounter, multi_head_attention, scaled_dot_attention
from molvit.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from molvit.decoder import DecoderConfig, causal_mask, decode_forward, sinusoidal_pe
from molvit.encoder import EncoderConfig, embed_patches, encode_image, patchify
from molvit.evaluation import EvalReport, bench_decode, evaluate, levenshtein
from molvit.inference import (
    DecodeCache,
    greedy_decode,
    greedy_decode_cached,
    greedy_decode_encoder_once,
    greedy_decode_naive,
    step_cached,
)
from molvit.model import Model, ModelConfig, preset
from molvit.tensor import Tape, Tensor, backward
from molvit.tokenizer import Vocab, build_vocab, decode, encode, split
from molvit.training import TrainConfig, adam_step, lr_at_epoch, split_dataset, train, xent_loss

__version__ = "0.1.0"
