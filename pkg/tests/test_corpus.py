import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chronotag.corpus import (
    AnnotatedParagraph,
    CorpusVariant,
    EntityLabel,
    EntitySpan,
    MarkerKind,
    MarkerSpan,
    Style,
    add_marker_view,
    corpus_stats,
    dump_corpus,
    make_variant,
    parse_corpus,
    spans_from_bio,
    split_temporal,
    strip_markers,
    to_bio,
)
from chronotag.errors import (
    CorpusFormatError,
    CorruptAnnotationError,
    DataError,
    SpanError,
)
from chronotag.synth import default_synth_config, generate_synthetic


def record_bytes(**kwargs) -> bytes:
    base = {"id": "p1", "reign": "injo", "year": 1630, "text": "abcde",
            "entities": [], "markers": []}
    base.update(kwargs)
    return (json.dumps(base, ensure_ascii=False) + "\n").encode("utf-8")


class TestParse:
    def test_empty_stream(self):
        assert parse_corpus(b"") == []

    def test_minimal_record(self):
        got = parse_corpus(record_bytes(entities=[[0, 2, "PERSON"]]))
        assert len(got) == 1
        p = got[0]
        assert p.id == "p1" and p.text == "abcde"
        assert p.entities == (EntitySpan(0, 2, EntityLabel.PERSON),)

    def test_span_out_of_bounds_names_record(self):
        with pytest.raises(SpanError, match="'p1'"):
            parse_corpus(record_bytes(entities=[[0, 6, "PERSON"]]))

    def test_malformed_json_reports_line(self):
        stream = record_bytes() + b"{oops\n"
        with pytest.raises(CorpusFormatError, match="line 2"):
            parse_corpus(stream)

    def test_unknown_label(self):
        with pytest.raises(CorpusFormatError, match="DEITY"):
            parse_corpus(record_bytes(entities=[[0, 2, "DEITY"]]))

    def test_unknown_marker_kind(self):
        with pytest.raises(CorpusFormatError):
            parse_corpus(record_bytes(markers=[[0, 0, "FOOTNOTE"]]))

    def test_overlapping_entities_rejected(self):
        with pytest.raises(SpanError, match="overlap"):
            parse_corpus(record_bytes(entities=[[0, 3, "PERSON"], [2, 4, "LOCATION"]]))

    def test_order_preserved_and_roundtrip(self):
        stream = record_bytes(id="a") + record_bytes(id="b", text="xyz")
        got = parse_corpus(stream)
        assert [p.id for p in got] == ["a", "b"]
        assert parse_corpus(dump_corpus(got)) == got


class TestMarkers:
    def test_strip_without_markers_is_identity(self):
        p = AnnotatedParagraph("p", "injo", 1630, "abc", (EntitySpan(0, 2, EntityLabel.PERSON),))
        assert strip_markers(p).text == "abc"
        assert strip_markers(p).entities == p.entities

    def test_strip_hand_fixture(self):
        # text "A。BC", glyph at offset 1, entity (2,4) over "BC"
        p = AnnotatedParagraph(
            "p", "injo", 1630, "A。BC",
            (EntitySpan(2, 4, EntityLabel.LOCATION),),
            (MarkerSpan(1, 2, MarkerKind.PHRASE_BOUNDARY),),
        )
        stripped = strip_markers(p)
        assert stripped.text == "ABC"
        assert stripped.entities == (EntitySpan(1, 3, EntityLabel.LOCATION),)
        assert stripped.surface(stripped.entities[0]) == "BC"
        assert stripped.markers == ()

    def test_strip_rejects_glyph_inside_entity(self):
        p = AnnotatedParagraph(
            "p", "injo", 1630, "A。BC",
            (EntitySpan(0, 3, EntityLabel.PERSON),),
        )
        with pytest.raises(CorruptAnnotationError):
            strip_markers(p)

    def test_add_without_markers_is_identity(self):
        p = AnnotatedParagraph("p", "injo", 1630, "abc")
        assert add_marker_view(p) == p

    def test_add_inverts_strip_fixture(self):
        p = AnnotatedParagraph(
            "p", "injo", 1630, "ABC",
            (EntitySpan(1, 3, EntityLabel.LOCATION),),
            (MarkerSpan(1, 1, MarkerKind.PHRASE_BOUNDARY),),
        )
        marked = add_marker_view(p)
        assert marked.text == "A。BC"
        assert marked.entities == (EntitySpan(2, 4, EntityLabel.LOCATION),)
        assert marked.markers == (MarkerSpan(1, 2, MarkerKind.PHRASE_BOUNDARY),)
        back = strip_markers(marked)
        assert back.text == p.text
        assert back.entities == p.entities

    def test_add_rejects_marker_inside_entity(self):
        p = AnnotatedParagraph(
            "p", "injo", 1630, "ABCD",
            (EntitySpan(0, 3, EntityLabel.PERSON),),
            (MarkerSpan(1, 1, MarkerKind.OMISSION_NOTE),),
        )
        with pytest.raises(CorruptAnnotationError):
            add_marker_view(p)

    def test_marker_at_entity_boundaries_is_fine(self):
        p = AnnotatedParagraph(
            "p", "injo", 1630, "ABCD",
            (EntitySpan(1, 3, EntityLabel.PERSON),),
            (MarkerSpan(1, 1, MarkerKind.PHRASE_BOUNDARY),
             MarkerSpan(3, 3, MarkerKind.PHRASE_BOUNDARY)),
        )
        marked = add_marker_view(p)
        assert marked.surface(marked.entities[0]) == "BC"

    def test_roundtrip_on_synthetic_corpus(self):
        config = default_synth_config(past_paragraphs=50, future_paragraphs=0)
        for p in generate_synthetic(config, seed=3):
            marked = add_marker_view(p)
            back = strip_markers(marked)
            assert back.text == strip_markers(p).text
            assert back.entities == strip_markers(p).entities
            for before, after in zip(p.entities, marked.entities):
                assert p.surface(before) == marked.surface(after)


class TestBio:
    def test_no_entities_all_o(self):
        p = AnnotatedParagraph("p", "injo", 1630, "abcd")
        assert to_bio(p).tags == ("O",) * 4

    def test_interior_entity(self):
        p = AnnotatedParagraph("p", "injo", 1630, "abcde", (EntitySpan(1, 4, EntityLabel.LOCATION),))
        assert to_bio(p).tags == ("O", "B-LOC", "I-LOC", "I-LOC", "O")

    def test_adjacent_entities_get_distinct_b_tags(self):
        p = AnnotatedParagraph(
            "p", "injo", 1630, "ab",
            (EntitySpan(0, 1, EntityLabel.PERSON), EntitySpan(1, 2, EntityLabel.PERSON)),
        )
        assert to_bio(p).tags == ("B-PER", "B-PER")

    def test_spans_from_all_o(self):
        assert spans_from_bio(["O", "O", "O"]) == []

    def test_spans_simple(self):
        assert spans_from_bio(["O", "B-PER", "I-PER", "O"]) == [EntitySpan(1, 3, EntityLabel.PERSON)]

    def test_lenient_repair(self):
        assert spans_from_bio(["I-LOC", "I-LOC"]) == [EntitySpan(0, 2, EntityLabel.LOCATION)]

    def test_repair_on_type_switch(self):
        assert spans_from_bio(["B-PER", "I-LOC"]) == [
            EntitySpan(0, 1, EntityLabel.PERSON),
            EntitySpan(1, 2, EntityLabel.LOCATION),
        ]

    def test_roundtrip_on_synthetic(self):
        config = default_synth_config(past_paragraphs=50, future_paragraphs=10, drift=0.3)
        for p in generate_synthetic(config, seed=4):
            assert tuple(spans_from_bio(to_bio(p))) == p.entities


class TestSplit:
    def mixed_corpus(self, n=40):
        config = default_synth_config(past_paragraphs=n, future_paragraphs=n // 2)
        return generate_synthetic(config, seed=5)

    def test_empty_side_errors(self):
        config = default_synth_config(past_paragraphs=5, future_paragraphs=0)
        corpus = generate_synthetic(config, seed=1)
        with pytest.raises(DataError, match="future"):
            split_temporal(corpus, {"injo"}, {"soonjong"}, seed=0)

    def test_overlapping_reigns_error(self):
        with pytest.raises(DataError):
            split_temporal(self.mixed_corpus(), {"injo"}, {"injo"}, seed=0)

    def test_conservation(self):
        corpus = self.mixed_corpus()
        split = split_temporal(corpus, {"injo"}, {"soonjong"}, seed=9)
        assert len(split.past) == sum(p.reign == "injo" for p in corpus)
        assert len(split.future) == sum(p.reign == "soonjong" for p in corpus)

    def test_determinism(self):
        corpus = self.mixed_corpus()
        a = split_temporal(corpus, {"injo"}, {"soonjong"}, seed=9)
        b = split_temporal(corpus, {"injo"}, {"soonjong"}, seed=9)
        assert a == b
        c = split_temporal(corpus, {"injo"}, {"soonjong"}, seed=10)
        assert [p.id for p in a.past.train] != [p.id for p in c.past.train]

    def test_ratio_validation(self):
        with pytest.raises(DataError):
            split_temporal(self.mixed_corpus(), {"injo"}, {"soonjong"}, seed=0, ratios=(0.9, 0.2, 0.1))

    def test_disjoint_and_exhaustive(self):
        corpus = self.mixed_corpus()
        split = split_temporal(corpus, {"injo"}, {"soonjong"}, seed=2)
        ids = [p.id for p in split.past.all()]
        assert len(ids) == len(set(ids))
        assert sorted(ids) == sorted(p.id for p in corpus if p.reign == "injo")


class TestStats:
    def test_single_column_paragraph(self):
        p = AnnotatedParagraph("p", "injo", 1630, "x" * 118)
        stats = corpus_stats([p])
        assert stats.paragraph_count == 1
        assert stats.mean_paragraph_length == 118

    def test_mean_of_two(self):
        ps = [
            AnnotatedParagraph("a", "injo", 1630, "abc"),
            AnnotatedParagraph("b", "injo", 1631, "abcde"),
        ]
        assert corpus_stats(ps).mean_paragraph_length == 4.0

    def test_planted_entity_counts(self):
        ps = [
            AnnotatedParagraph(
                f"p{i}", "injo", 1630, "abcdef",
                (EntitySpan(0, 2, EntityLabel.PERSON),),
            )
            for i in range(10)
        ]
        stats = corpus_stats(ps)
        assert stats.entity_counts[EntityLabel.PERSON] == 10
        assert stats.entity_counts[EntityLabel.BOOK] == 0

    def test_empty_corpus_errors(self):
        with pytest.raises(DataError):
            corpus_stats([])

    def test_distinct_chars(self):
        ps = [AnnotatedParagraph("a", "injo", 1630, "aab"),
              AnnotatedParagraph("b", "injo", 1630, "bcc")]
        assert corpus_stats(ps).distinct_chars == 3


class TestVariants:
    def test_unmarked_variant_invariant(self):
        config = default_synth_config(past_paragraphs=10, future_paragraphs=0)
        corpus = generate_synthetic(config, seed=6)
        variant = make_variant(corpus, Style.UNMARKED)
        for p in variant.paragraphs:
            assert p.markers == ()
            assert "。" not in p.text

    def test_unmarked_constructor_rejects_glyphs(self):
        p = AnnotatedParagraph("p", "injo", 1630, "a。b")
        with pytest.raises(DataError):
            CorpusVariant(Style.UNMARKED, (p,))

    def test_marked_variant_remaps_offsets(self):
        config = default_synth_config(past_paragraphs=10, future_paragraphs=0)
        corpus = generate_synthetic(config, seed=6)
        variant = make_variant(corpus, Style.MARKED)
        for raw, marked in zip(corpus, variant.paragraphs):
            assert [marked.surface(s) for s in marked.entities] == [raw.surface(s) for s in raw.entities]


@st.composite
def paragraph_strategy(draw):
    """Random standoff paragraphs with non-overlapping entities and markers
    whose insertion points avoid entity interiors."""
    text = draw(st.text(alphabet="abcdefgh", min_size=1, max_size=30))
    n = len(text)
    n_ent = draw(st.integers(0, 3))
    cuts = sorted(draw(st.lists(st.integers(0, n), min_size=2 * n_ent, max_size=2 * n_ent)))
    entities = []
    for k in range(n_ent):
        s, e = cuts[2 * k], cuts[2 * k + 1]
        if s < e and (not entities or s >= entities[-1].end):
            entities.append(EntitySpan(s, e, draw(st.sampled_from(list(EntityLabel)))))
    blocked = [(s.start, s.end) for s in entities]
    markers = []
    for _ in range(draw(st.integers(0, 4))):
        pos = draw(st.integers(0, n))
        if any(a < pos < b for a, b in blocked):
            continue
        markers.append(MarkerSpan(pos, pos, draw(st.sampled_from(list(MarkerKind)))))
    return AnnotatedParagraph("h", "injo", 1630, text, tuple(entities), tuple(markers))


class TestProperties:
    @given(paragraph_strategy())
    @settings(max_examples=200, deadline=None)
    def test_marker_roundtrip_property(self, p):
        marked = add_marker_view(p)
        back = strip_markers(marked)
        assert back.text == strip_markers(p).text
        assert back.entities == strip_markers(p).entities

    @given(paragraph_strategy())
    @settings(max_examples=200, deadline=None)
    def test_bio_roundtrip_property(self, p):
        assert tuple(spans_from_bio(to_bio(p))) == p.entities

    @given(paragraph_strategy())
    @settings(max_examples=200, deadline=None)
    def test_offset_safety(self, p):
        marked = add_marker_view(p)
        for before, after in zip(p.entities, marked.entities):
            assert p.surface(before) == marked.surface(after)
