import json

import pytest

from appliance_sim.bench.episodes import dump_episode, episode_from_json, verify_episode
from appliance_sim.errors import ApplianceSimError
from appliance_sim.manual import render_manual


def test_corpus_scale(corpus):
    assert len(corpus.specs) >= 8
    assert len({s.category for s in corpus.specs.values()}) >= 6
    assert len(corpus.episodes) >= 40
    assert sum(len(e.perturbations) for e in corpus.episodes) >= 30


def test_episode_ids_are_unique_and_sorted(corpus):
    ids = [e.id for e in corpus.episodes]
    assert ids == sorted(set(ids))


def test_every_appliance_has_episodes(corpus):
    assert {e.appliance for e in corpus.episodes} == set(corpus.specs)


def test_bundled_episodes_verify(corpus):
    for ep in corpus.episodes:
        spec = corpus.spec_for(ep)
        assert verify_episode(spec, ep, corpus.manual(spec.id)) == [], ep.id


def test_relevant_pages_point_at_the_right_categories(corpus):
    for ep in corpus.episodes:
        doc = corpus.manual(ep.appliance)
        for category, pages in ep.relevant_pages.items():
            assert pages
            assert all(doc.page(i).category == category for i in pages), (ep.id, category)


def test_grounding_queries_are_parts(corpus):
    for ep in corpus.episodes:
        spec = corpus.spec_for(ep)
        assert all(q in spec.part_map for q in ep.grounding_queries)


def test_episode_json_round_trip(corpus):
    for ep in corpus.episodes:
        assert dump_episode(episode_from_json(json.loads(dump_episode(ep)))) == dump_episode(ep)


def test_verify_flags_broken_plan(corpus):
    ep = corpus.by_id["microwave-02"]
    data = json.loads(dump_episode(ep))
    data["gt_plan"] = data["gt_plan"][:1]
    problems = verify_episode(corpus.spec_for(ep), episode_from_json(data))
    assert problems


def test_episode_rejects_unknown_keys(corpus):
    data = json.loads(dump_episode(corpus.episodes[0]))
    data["bonus"] = 1
    with pytest.raises(ApplianceSimError):
        episode_from_json(data)


def test_manual_has_after_sales_page(specs):
    for spec in specs.values():
        assert render_manual(spec, 0).indices("after_sales")
