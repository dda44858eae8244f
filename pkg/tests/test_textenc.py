"""Tests pour le module textenc."""

from pathlib import Path

import numpy as np
import pytest

from degen_lab.exceptions import (
    DimensionMismatchError,
    EmbeddingParseError,
    InconsistentDimensionError,
    VocabMismatchError,
)
from degen_lab.models import ConceptPool
from degen_lab.numcore import init_gru_params
from degen_lab.perturb import lexicon_from_pool
from degen_lab.textenc import (
    UNK_TOKEN,
    EmbeddingEncoder,
    EmbeddingTable,
    EncoderParams,
    HashEncoder,
    TrainingCorpus,
    cosine_distance,
    embed_sequence,
    embedding_drift,
    gru_encode,
    hash_encode,
    load_embedding_file,
    nearest_neighbours,
    parse_embedding_lines,
    synth_pretrain,
    tokenize,
    write_embedding_file,
)


def test_tokenize() -> None:
    """Test le découpage en jetons minuscules."""
    assert tokenize("You've entered a Kitchen.") == ["you", "ve", "entered", "a", "kitchen"]
    assert tokenize("  ... ") == []


def test_hash_encode_unit_and_deterministic() -> None:
    """Test que le hachage donne un vecteur unitaire stable."""
    v = hash_encode("take mug from table", 16)

    assert v.shape == (16,)
    assert np.isclose(np.linalg.norm(v), 1.0)
    assert np.array_equal(v, hash_encode("take mug from table", 16))
    assert not np.array_equal(v, hash_encode("take cup from table", 16))
    assert not np.array_equal(v, hash_encode("take mug from table", 16, salt=1))


def test_hash_encode_ignores_meaning(pool: ConceptPool) -> None:
    """Test que des synonymes ne sont pas plus proches que des paires quelconques."""
    lexicon = lexicon_from_pool(pool)
    synonyms = [(x, y) for x, ys in lexicon.entries.items() for y in ys]
    words = sorted({w for pair in synonyms for w in pair})
    rng = np.random.default_rng(0)
    unrelated = [tuple(rng.choice(words, size=2, replace=False)) for _ in range(len(synonyms))]

    def similarity(pairs: list[tuple[str, str]]) -> np.ndarray:
        return np.array([abs(hash_encode(x, 64) @ hash_encode(y, 64)) for x, y in pairs])

    close, far = similarity(synonyms), similarity(unrelated)
    assert close.max() < 0.5
    assert abs(close.mean() - far.mean()) < 0.1


def test_hash_encode_invalid_dim() -> None:
    """Test le refus d'une dimension nulle."""
    with pytest.raises(ValueError):
        hash_encode("look", 0)


def test_cosine_distance() -> None:
    """Test la distance cosinus."""
    u = np.array([1.0, 0.0])

    assert cosine_distance(u, u) == 0.0
    assert cosine_distance(u, np.array([0.0, 2.0])) == pytest.approx(1.0)
    assert cosine_distance(u, -u) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        cosine_distance(u, np.zeros(2))


def test_parse_embedding_lines_adds_unknown_row() -> None:
    """Test l'analyse GloVe et la ligne inconnue moyenne."""
    table = parse_embedding_lines(["mug 1 0\n", "\n", "cup 0 1\n"])

    assert table.dim == 2
    assert table.tokens == ["mug", "cup", UNK_TOKEN]
    assert np.allclose(table.vector(UNK_TOKEN), [0.5, 0.5])
    assert np.array_equal(table.vector("saucer"), table.vector(UNK_TOKEN))


def test_parse_embedding_errors() -> None:
    """Test les erreurs d'analyse avec numéro de ligne."""
    with pytest.raises(InconsistentDimensionError, match="ligne 2"):
        parse_embedding_lines(["mug 1 0", "cup 0 1 2"])
    with pytest.raises(EmbeddingParseError, match="ligne 1"):
        parse_embedding_lines(["mug one two"])
    with pytest.raises(EmbeddingParseError, match="dupliqué"):
        parse_embedding_lines(["mug 1 0", "mug 0 1"])
    with pytest.raises(EmbeddingParseError):
        parse_embedding_lines([])


def test_embedding_file_round_trip(tmp_path: Path, small_table: EmbeddingTable) -> None:
    """Test que l'écriture puis la relecture redonne la table au bit près."""
    path = tmp_path / "emb.txt"
    write_embedding_file(small_table, path)
    loaded = load_embedding_file(path)

    assert loaded.vocab == small_table.vocab
    assert np.array_equal(loaded.matrix, small_table.matrix)


def test_synth_pretrain_groups_synonyms(pool: ConceptPool) -> None:
    """Test que les noms d'un même concept sont voisins et les concepts éloignés."""
    table = synth_pretrain(pool, 50, 1234)

    assert cosine_distance(table.vector("mug"), table.vector("cup")) < 0.25
    assert cosine_distance(table.vector("fridge"), table.vector("refrigerator")) < 0.25
    assert cosine_distance(table.vector("mug"), table.vector("jacket")) > 0.5
    assert np.isclose(np.linalg.norm(table.vector(UNK_TOKEN)), 1.0)
    assert np.array_equal(table.pretrained_snapshot, table.matrix)
    with pytest.raises(ValueError):
        synth_pretrain(pool, 1, 0)


def test_pretrained_snapshot_is_read_only(small_table: EmbeddingTable) -> None:
    """Test que l'instantané pré-entraîné ne peut pas être modifié."""
    with pytest.raises(ValueError):
        small_table.pretrained_snapshot[0, 0] = 1.0


def test_gru_encode_matches_batched_encoder(embedding_encoder: EmbeddingEncoder) -> None:
    """Test que l'encodeur en lot égale l'encodage d'une séquence seule."""
    params = embedding_encoder.params
    text = "Inside the cupboard you can make out a mug."
    single = gru_encode(embed_sequence(tokenize(text), params.embedding), params.gru)
    batched = embedding_encoder.encode(["look", text])

    assert np.allclose(batched[1], single)


def test_gru_encode_dimension_mismatch(small_table: EmbeddingTable) -> None:
    """Test l'erreur de dimension du GRU."""
    gru = init_gru_params(np.random.default_rng(0), small_table.dim + 1, 3)

    with pytest.raises(DimensionMismatchError):
        gru_encode(embed_sequence(["mug"], small_table), gru)


def test_empty_text_encodes_to_zero(embedding_encoder: EmbeddingEncoder) -> None:
    """Test qu'un texte sans jeton donne l'état initial nul."""
    assert np.array_equal(embedding_encoder.encode(["..."])[0], np.zeros(5))


def test_encoding_is_batch_independent(embedding_encoder: EmbeddingEncoder) -> None:
    """Test qu'un texte s'encode de la même façon seul ou dans un lot."""
    texts = ["take mug from table", "look", "You are carrying a mug."]
    batch, _ = embedding_encoder.forward(texts)
    alone, _ = embedding_encoder.forward(texts[:1])

    assert np.allclose(batch[0], alone[0])


def test_encode_cache_is_bounded(embedding_encoder: EmbeddingEncoder) -> None:
    """Test que le cache d'encodage oublie les textes les plus anciens."""
    encoder = EmbeddingEncoder(embedding_encoder.params, cache_size=2)
    texts = ["take mug", "open cupboard", "look", "take mug from table"]
    expected, _ = encoder.forward(texts)

    assert np.allclose(encoder.encode(texts), expected)
    assert list(encoder._cache) == texts[-2:]
    assert np.allclose(encoder.encode(texts[:1]), expected[:1])
    assert list(encoder._cache) == ["take mug from table", "take mug"]


def test_encoder_backward_touches_only_used_rows(embedding_encoder: EmbeddingEncoder) -> None:
    """Test que seules les lignes des jetons vus reçoivent un gradient."""
    h, cache = embedding_encoder.forward(["take mug", "open cupboard"])
    grads = embedding_encoder.backward(np.ones_like(h), cache)
    table = embedding_encoder.params.embedding
    used = {table.index(t) for t in ["take", "mug", "open", "cupboard"]}

    for row in range(table.matrix.shape[0]):
        if row in used:
            assert np.any(grads["embedding"][row])
        else:
            assert not np.any(grads["embedding"][row])


def test_encoder_params_share_arrays(embedding_encoder: EmbeddingEncoder) -> None:
    """Test que le ParamSet partage ses tableaux avec la table et le GRU."""
    params = embedding_encoder.params
    before = params.fingerprint()
    params.param_set["embedding"][0, 0] += 1.0

    assert params.embedding.matrix[0, 0] == params.param_set["embedding"][0, 0]
    assert params.fingerprint() != before


def test_encoder_params_dimension_check(small_table: EmbeddingTable) -> None:
    """Test le refus d'un GRU incompatible avec la table."""
    gru = init_gru_params(np.random.default_rng(0), small_table.dim + 2, 4)

    with pytest.raises(DimensionMismatchError):
        EncoderParams(small_table.copy(), gru, frozen=True)


def test_hash_encoder_has_no_weights() -> None:
    """Test l'encodeur par hachage."""
    encoder = HashEncoder(8, salt=3)

    assert not encoder.trainable
    assert encoder.encode(["look", "look"]).shape == (2, 8)
    assert encoder.encode([]).shape == (0, 8)
    assert encoder.fingerprint() == HashEncoder(8, salt=3).fingerprint()


def test_embedding_drift_zero_at_start(small_table: EmbeddingTable) -> None:
    """Test une dérive nulle avant tout entraînement, non nulle après modification."""
    table = small_table.copy()
    assert all(d.distance == 0.0 for d in embedding_drift(table).values())

    table.matrix[table.index("mug")] = -table.matrix[table.index("mug")]
    assert embedding_drift(table)["mug"].distance == pytest.approx(2.0)


def test_embedding_drift_against_reference(small_table: EmbeddingTable) -> None:
    """Test la dérive mesurée par rapport à un autre instantané de la même table."""
    start = small_table.copy()
    end = small_table.copy()
    end.matrix[end.index("mug")] = 0.0
    drift = embedding_drift(end, reference=start)

    assert drift["mug"].distance == 1.0
    assert drift["mug"].degenerate
    assert all(d.distance == 0.0 or d.degenerate for t, d in drift.items() if t != "mug")

    other = EmbeddingTable(vocab={"mug": 0, UNK_TOKEN: 1}, matrix=np.ones((2, 4)), unk_row=1)
    with pytest.raises(VocabMismatchError):
        embedding_drift(end, reference=other)


def test_nearest_neighbours(pool: ConceptPool) -> None:
    """Test que le synonyme OOD est le plus proche voisin."""
    table = synth_pretrain(pool, 50, 1234)
    neighbours = nearest_neighbours(table, "mug", k=3)

    assert neighbours[0][0] == "cup"
    assert len(neighbours) == 3
    assert all(token != "mug" for token, _ in neighbours)


def test_training_corpus(tmp_path: Path) -> None:
    """Test le corpus d'entraînement et sa sérialisation."""
    corpus = TrainingCorpus()
    corpus.record(["You see a table.", "look"], 0.0)
    corpus.record(["put mug in cupboard"], 1.0)

    assert "table" in corpus.seen and "table" not in corpus.rewarded
    assert {"put", "mug", "in", "cupboard"} <= corpus.rewarded
    path = tmp_path / "corpus.json"
    corpus.save(path)
    assert TrainingCorpus.load(path) == corpus
