import numpy as np
import pytest

from imgk.embeddings import ImageSetManifest, PatchEmbeddings, write_embeddings
from imgk.errors import PipelineStageError
from imgk.pipeline import (
    PipelineConfig,
    score_corpus,
    score_set,
    write_index_csv,
    write_kvalues_jsonl,
)
from imgk.validate import make_six_cluster_fixture, six_cluster_search_config


@pytest.fixture(scope="module")
def six_cluster():
    points, labels, spec = make_six_cluster_fixture()
    store = {
        "img_000": PatchEmbeddings("img_000", points[:196], "synthetic-mixture-v1"),
        "img_001": PatchEmbeddings("img_001", points[196:], "synthetic-mixture-v1"),
    }
    manifest = ImageSetManifest("six_cluster", ("img_000", "img_001"))
    config = PipelineConfig(pca_components=100, search=six_cluster_search_config())
    return manifest, store, config


def test_six_component_set_scores_six(six_cluster):
    manifest, store, config = six_cluster
    value = score_set(manifest, store, config)
    assert value.k_star == 6
    assert value.n_images == 2
    assert value.n_points == 392
    assert value.l_eff == min(100, 391, 64)
    assert 0.0 <= value.pca_cumvar_at_l <= 1.0
    assert value.k_star >= config.search.k_min


def test_degenerate_set_fails_in_pca_stage():
    flat = PatchEmbeddings("flat", np.ones((196, 16), dtype=np.float32), "synthetic")
    manifest = ImageSetManifest("degenerate", ("flat",))
    with pytest.raises(PipelineStageError) as err:
        score_set(manifest, {"flat": flat}, PipelineConfig())
    assert err.value.stage == "pca"


def test_scoring_twice_is_bitwise_identical(six_cluster):
    manifest, store, config = six_cluster
    a = score_set(manifest, store, config)
    b = score_set(manifest, store, config)
    assert a.to_dict() == b.to_dict()


def test_duplicate_image_grows_points_but_not_k_star(six_cluster):
    manifest, store, config = six_cluster
    baseline = score_set(manifest, store, config)
    bigger_store = dict(store)
    bigger_store["img_002"] = PatchEmbeddings(
        "img_002", store["img_000"].patches.copy(), "synthetic-mixture-v1"
    )
    bigger = ImageSetManifest("six_cluster", ("img_000", "img_001", "img_002"))
    value = score_set(bigger, bigger_store, config)
    assert value.n_points == baseline.n_points + 196
    assert value.k_star == baseline.k_star


class TestCorpus:
    def make_corpus(self, six_cluster):
        manifest, store, config = six_cluster
        other = ImageSetManifest("six_cluster_again", ("img_001", "img_000"))
        return [manifest, other], store, config

    def test_output_order_matches_input_order(self, six_cluster):
        manifests, store, config = self.make_corpus(six_cluster)
        result = score_corpus(manifests, store, config, parallelism=4)
        assert [v.set_id for v in result.values] == [m.set_id for m in manifests]

    def test_corrupt_member_is_isolated(self, six_cluster):
        manifests, store, config = self.make_corpus(six_cluster)
        bad_store = dict(store)
        bad_store["flat"] = PatchEmbeddings(
            "flat", np.zeros((196, 64), dtype=np.float32) + 1.0, "synthetic-mixture-v1"
        )
        manifests = manifests + [ImageSetManifest("broken", ("flat",))]
        result = score_corpus(manifests, bad_store, config)
        assert [v.set_id for v in result.values] == ["six_cluster", "six_cluster_again"]
        assert len(result.failures) == 1
        assert result.failures[0].set_id == "broken"
        assert result.failures[0].stage == "pca"
        assert not result.ok

    def test_parallelism_does_not_change_results(self, six_cluster):
        manifests, store, config = self.make_corpus(six_cluster)
        seq = score_corpus(manifests, store, config, parallelism=1)
        par = score_corpus(manifests, store, config, parallelism=8)
        assert [v.to_dict() for v in seq.values] == [v.to_dict() for v in par.values]


def test_jsonl_and_index_outputs(six_cluster, tmp_path):
    manifest, store, config = six_cluster
    value = score_set(manifest, store, config)
    write_kvalues_jsonl([value], tmp_path / "kvalues.jsonl")
    write_index_csv([value], tmp_path / "index.csv")
    import json

    record = json.loads((tmp_path / "kvalues.jsonl").read_text().splitlines()[0])
    assert record["set_id"] == "six_cluster"
    assert record["k_star"] == 6
    assert record["pipeline_config_hash"] == config.hash()
    lines = (tmp_path / "index.csv").read_text().splitlines()
    assert lines[0] == "set_id,k_star,n_images,cumvar"
    assert lines[1].startswith("six_cluster,6,2,")


def test_config_hash_tracks_settings(six_cluster):
    _, _, config = six_cluster
    assert config.hash() != PipelineConfig().hash()
    assert config.hash() == PipelineConfig(
        pca_components=100, search=six_cluster_search_config()
    ).hash()
