"""Offline test fixture: a tiny randomly initialized model with the same
architecture family and hidden width as the default export model, saved
locally so the export path can be exercised without network access."""

from __future__ import annotations

from pathlib import Path

_CHARS = "abcdefghijklmnopqrstuvwxyz0123456789-"


def _build_tokenizer():
    """Character-piece WordPiece tokenizer so distinct keys tokenize distinctly."""
    from tokenizers import Tokenizer
    from tokenizers.models import WordPiece
    from tokenizers.normalizers import BertNormalizer
    from tokenizers.pre_tokenizers import BertPreTokenizer
    from tokenizers.processors import TemplateProcessing
    from transformers import PreTrainedTokenizerFast

    vocab_list = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    vocab_list += list(_CHARS) + [f"##{c}" for c in _CHARS]
    vocab = {token: i for i, token in enumerate(vocab_list)}

    tokenizer = Tokenizer(WordPiece(vocab, unk_token="[UNK]"))
    tokenizer.normalizer = BertNormalizer(lowercase=True)
    tokenizer.pre_tokenizer = BertPreTokenizer()
    tokenizer.post_processor = TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])],
    )
    return (
        PreTrainedTokenizerFast(
            tokenizer_object=tokenizer,
            unk_token="[UNK]",
            pad_token="[PAD]",
            cls_token="[CLS]",
            sep_token="[SEP]",
            mask_token="[MASK]",
        ),
        len(vocab_list),
    )


def make_local_test_model(path: str | Path, dim: int = 768, seed: int = 0) -> Path:
    """Build and save a one-layer model directory loadable by the exporter."""
    import torch
    from transformers import DistilBertConfig, DistilBertModel

    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)

    tokenizer, vocab_size = _build_tokenizer()
    tokenizer.save_pretrained(path)

    config = DistilBertConfig(
        vocab_size=vocab_size,
        dim=dim,
        n_layers=1,
        n_heads=4,
        hidden_dim=4 * dim,
        max_position_embeddings=64,
    )
    torch.manual_seed(seed)
    model = DistilBertModel(config)
    model.save_pretrained(path)
    return path
