"""Graph-enhanced dialogue state tracker on a from-scratch differentiable kernel."""

from statetrack.corpus import (
    BUILTIN_SCHEMAS,
    CorpusError,
    Dialogue,
    DialogueState,
    DialogueTurn,
    Schema,
    SchemaError,
    Vocabulary,
    build_vocab,
    generate_corpus,
    load_corpus,
    save_corpus,
)

__all__ = [
    "BUILTIN_SCHEMAS",
    "CorpusError",
    "Dialogue",
    "DialogueState",
    "DialogueTurn",
    "Schema",
    "SchemaError",
    "Vocabulary",
    "build_vocab",
    "generate_corpus",
    "load_corpus",
    "save_corpus",
]
