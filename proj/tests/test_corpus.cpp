#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace hardneg;
using namespace testing_support;

namespace {

std::size_t count_lines(const fs::path& p) {
    const auto body = read_file(p);
    return static_cast<std::size_t>(std::count(body.begin(), body.end(), '\n'));
}

}  // namespace

TEST(Enums, FinancePropertiesRoundTrip) {
    ASSERT_EQ(kAllFinanceProperties.size(), 6u);
    const std::vector<std::string> names{"year", "company_name", "numerical_value", "financial_metric",
                                         "subject_metric", "business_segment"};
    for (std::size_t i = 0; i < names.size(); ++i) {
        EXPECT_EQ(to_string(kAllFinanceProperties[i]), names[i]);
        EXPECT_EQ(parse_finance_property(names[i]), kAllFinanceProperties[i]);
    }
    EXPECT_THROW(parse_finance_property("colour"), ValidationError);
}

TEST(Enums, QueryKindsUseHyphenatedNames) {
    for (auto k : {QueryKind::generated_positive, QueryKind::generic_negative, QueryKind::finance_negative,
                   QueryKind::rephrased_positive, QueryKind::imported})
        EXPECT_EQ(parse_query_kind(to_string(k)), k);
    EXPECT_EQ(to_string(QueryKind::generic_negative), "generic-negative");
    EXPECT_EQ(to_string(QueryKind::rephrased_positive), "rephrased-positive");
}

TEST(QueryInvariants, NegativeKindsNeedParentAndPolarity) {
    auto pos = kept_positive("p1", "What was revenue?");
    auto neg = kept_negative(pos, "What was profit?", 0);
    EXPECT_TRUE(query_violations(neg).empty());
    neg.parent_query_id.reset();
    EXPECT_FALSE(query_violations(neg).empty());
    neg = kept_negative(pos, "What was profit?", 0);
    neg.polarity = Polarity::positive;
    EXPECT_FALSE(query_violations(neg).empty());
}

TEST(QueryInvariants, PropertySetIffFinanceNegative) {
    auto pos = kept_positive("p1", "What was revenue in 2022?");
    auto fin = kept_negative(pos, "What was revenue in 2024?", 0, FinanceProperty::year);
    EXPECT_TRUE(query_violations(fin).empty());
    fin.property.reset();
    EXPECT_FALSE(query_violations(fin).empty());
    auto gen = kept_negative(pos, "x", 0);
    gen.property = FinanceProperty::year;
    EXPECT_FALSE(query_violations(gen).empty());
}

TEST(QueryInvariants, KeptNeedsBothVerdicts) {
    auto pos = kept_positive("p1", "q");
    pos.verdicts.pop_back();
    EXPECT_FALSE(query_violations(pos).empty());
    pos.verification = Verification::unverified;
    EXPECT_TRUE(query_violations(pos).empty());
}

TEST(TripletInvariants, RejectsDuplicateNegativeTextsAfterWhitespaceNormalization) {
    auto t = make_triplet(1);
    t.negatives[1].text = "  " + t.negatives[0].text + "  ";
    EXPECT_THROW(validate(t), ValidationError);
    t = make_triplet(1);
    t.negatives[2].text = t.positive.text + " ";
    EXPECT_THROW(validate(t), ValidationError);
}

TEST(TripletInvariants, RephrasedPositiveKeepsParentLineage) {
    auto t = make_triplet(3);
    auto r = t.positive;
    r.query_id = t.positive.query_id + "#r";
    r.kind = QueryKind::rephrased_positive;
    r.parent_query_id = t.positive.query_id;
    r.text = "Rephrased question";
    t.positive = r;
    EXPECT_NO_THROW(validate(t));
    t.negatives[0].parent_query_id = "elsewhere";
    EXPECT_THROW(validate(t), ValidationError);
}

TEST(Jsonl, EmptyInputCreatesEmptyFile) {
    TempDir dir;
    const auto p = dir / "empty.jsonl";
    EXPECT_EQ(write_jsonl({}, p), 0u);
    ASSERT_TRUE(fs::exists(p));
    EXPECT_EQ(fs::file_size(p), 0u);
    EXPECT_TRUE(read_jsonl(p).empty());
}

TEST(Jsonl, SingleTripletRoundTrips) {
    TempDir dir;
    const auto p = dir / "one.jsonl";
    std::vector<TripletRecord> in{make_triplet(7)};
    EXPECT_EQ(write_jsonl(in, p), 1u);
    EXPECT_EQ(count_lines(p), 1u);
    EXPECT_EQ(read_jsonl(p), in);
}

TEST(Jsonl, FieldOrderIsFixed) {
    TempDir dir;
    const auto p = dir / "one.jsonl";
    std::vector<TripletRecord> in{make_triplet(0)};
    write_jsonl(in, p);
    const auto line = read_file(p);
    const auto at = [&](const std::string& key) { return line.find("\"" + key + "\""); };
    EXPECT_LT(at("page_id"), at("image_path"));
    EXPECT_LT(at("image_path"), at("positive"));
    EXPECT_LT(at("positive"), at("negatives"));
    EXPECT_LT(at("query_id"), at("text"));
    EXPECT_LT(at("polarity"), at("kind"));
    EXPECT_LT(at("verification"), at("verdicts"));
}

TEST(Jsonl, ThousandTwoHundredTripletsGiveFortyEightHundredExamples) {
    TempDir dir;
    const auto p = dir / "many.jsonl";
    std::vector<TripletRecord> in;
    for (std::size_t i = 0; i < 1200; ++i) in.push_back(make_triplet(i));
    EXPECT_EQ(write_jsonl(in, p), 1200u);
    EXPECT_EQ(count_lines(p), 1200u);
    const auto back = read_jsonl(p);
    ASSERT_EQ(back.size(), 1200u);
    DatasetManifest m;
    m.total_positives = back.size();
    m.total_examples = kExamplesPerGroup * back.size();
    EXPECT_EQ(m.total_examples, 4800u);
    EXPECT_TRUE(validate_manifest(m, back).ok());
}

TEST(Jsonl, InvalidRecordRejectedBeforeAnythingIsWritten) {
    TempDir dir;
    const auto p = dir / "bad.jsonl";
    std::vector<TripletRecord> in{make_triplet(0), make_triplet(1)};
    in[1].negatives.pop_back();
    EXPECT_THROW(write_jsonl(in, p), ValidationError);
    EXPECT_FALSE(fs::exists(p));
    EXPECT_FALSE(fs::exists(dir / "bad.jsonl.partial"));
}

TEST(Jsonl, InvalidUtf8IsRejectedBeforeWriting) {
    TempDir dir;
    std::vector<TripletRecord> in{make_triplet(0)};
    in[0].negatives[0].text = "bad \xff byte";
    EXPECT_THROW(write_jsonl(in, dir / "x.jsonl"), ValidationError);
    EXPECT_FALSE(fs::exists(dir / "x.jsonl"));
}

TEST(Jsonl, MissingParentDirectoryIsAnIoError) {
    TempDir dir;
    std::vector<TripletRecord> in{make_triplet(0)};
    EXPECT_THROW(write_jsonl(in, dir / "no" / "such" / "x.jsonl"), IoError);
}

TEST(Jsonl, TwoNegativesNamesTheInvariant) {
    TempDir dir;
    auto t = make_triplet(2);
    t.negatives.pop_back();
    write_text(dir / "two.jsonl", to_json(t).dump() + "\n");
    try {
        read_jsonl(dir / "two.jsonl");
        FAIL() << "expected a validation failure";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 1u);
        EXPECT_NE(std::string(e.what()).find("negatives: expected 3"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("page-2"), std::string::npos) << e.what();
    }
}

TEST(Jsonl, TruncatedFinalLineReportsLastLine) {
    TempDir dir;
    const auto good = to_json(make_triplet(0)).dump();
    const auto second = to_json(make_triplet(1)).dump();
    write_text(dir / "trunc.jsonl", good + "\n" + second.substr(0, second.size() / 2));
    try {
        read_jsonl(dir / "trunc.jsonl");
        FAIL() << "expected a parse failure";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(Jsonl, RandomTripletsRoundTrip) {
    TempDir dir;
    std::mt19937_64 rng(11);
    const std::vector<std::string> alphabet{"a", "b", "Z", " ", "2022", "ü", "ï", "€", "\"", "\\", "\t", "{x}"};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<TripletRecord> in;
        const auto n = rng() % 6;
        for (std::size_t i = 0; i < n; ++i) {
            auto t = make_triplet(rng() % 1000 + i * 1000);
            auto rnd = [&] {
                std::string s = "q";
                for (int c = 0; c < 12; ++c) s += alphabet[rng() % alphabet.size()];
                return s;
            };
            t.positive.text = "P " + rnd();
            for (std::size_t k = 0; k < 3; ++k) t.negatives[k].text = "N" + std::to_string(k) + " " + rnd();
            if (rng() % 2) {
                for (std::size_t k = 0; k < 3; ++k) {
                    const auto prop = kAllFinanceProperties[(rng() + k) % 6];
                    t.negatives[k].kind = QueryKind::finance_negative;
                    t.negatives[k].property = prop;
                }
            }
            in.push_back(std::move(t));
        }
        const auto p = dir / ("r" + std::to_string(trial) + ".jsonl");
        write_jsonl(in, p);
        EXPECT_EQ(read_jsonl(p), in);
    }
}

TEST(Pages, DuplicatePageIdRejected) {
    TempDir dir;
    const auto a = make_page(dir.path(), "a");
    std::vector<PageRecord> pages{a, a};
    write_text(dir / "c.jsonl", to_json(a).dump() + "\n" + to_json(a).dump() + "\n");
    EXPECT_THROW(read_pages(dir / "c.jsonl"), ParseError);
}

TEST(Pages, RoundTripKeepsMeta) {
    TempDir dir;
    std::vector<PageRecord> pages{make_page(dir.path(), "a"), make_page(dir.path(), "b", "fintabnet")};
    write_pages(pages, dir / "c.jsonl");
    EXPECT_EQ(read_pages(dir / "c.jsonl"), pages);
}

TEST(Anchored, RoundTrip) {
    TempDir dir;
    const auto page = make_page(dir.path(), "a");
    std::vector<AnchoredQuery> in{{page, kept_positive("a", "What is shown?")}};
    write_anchored(in, dir / "pos.jsonl");
    EXPECT_EQ(read_anchored(dir / "pos.jsonl"), in);
}

TEST(Manifest, FullScaleCountsValidate) {
    DatasetManifest m;
    m.name = "Col-HNQue";
    m.total_positives = 120000;
    m.total_examples = 480000;
    EXPECT_TRUE(validate_manifest_counts(m, 120000, 480000).ok());

    DatasetManifest fin;
    fin.name = "Fin-HNQue";
    fin.total_positives = 20000;
    fin.total_examples = 80000;
    EXPECT_TRUE(validate_manifest_counts(fin, 20000, 80000).ok());
}

TEST(Manifest, OffByOneIsReported) {
    DatasetManifest m;
    m.total_positives = 10;
    m.total_examples = 40;
    std::vector<TripletRecord> nine;
    for (std::size_t i = 0; i < 9; ++i) nine.push_back(make_triplet(i));
    const auto r = validate_manifest(m, nine);
    EXPECT_FALSE(r.ok());
    EXPECT_FALSE(r.mismatches.empty());
}

TEST(Manifest, DeclaredTotalsMustBeFourToOne) {
    DatasetManifest m;
    m.total_positives = 10;
    m.total_examples = 30;
    EXPECT_FALSE(validate_manifest_counts(m, 10, 30).ok());
}

TEST(Manifest, FileRoundTrip) {
    TempDir dir;
    DatasetManifest m;
    m.name = "mix";
    m.sources = {{"Col-HNDoc", 600}, {"Col-HNQue", 400}};
    m.total_positives = 1000;
    m.total_examples = 4000;
    m.rephrase_fraction = 0.5;
    m.seed = 0xfeedfacecafebeefULL;
    write_manifest(m, dir / "m.json");
    EXPECT_EQ(read_manifest(dir / "m.json"), m);
}
