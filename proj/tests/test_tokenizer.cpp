#include <doctest.h>

#include <fstream>
#include <random>

#include "guidecap/tokenizer.hpp"
#include "test_support.hpp"

using namespace gcap;

TEST_CASE("normalize: lowercase, whitespace collapse, strip") {
    CHECK(normalize_text("  Hello   WORLD \t\n") == "hello world");
    CHECK(normalize_text("") == "");
    CHECK(normalize_text("   ") == "");
    CHECK(normalize_text("a  b") == "a b");
}

TEST_CASE("train_vocab: merge counts on a run of a's produce piece aa first") {
    const std::vector<std::string> corpus = {"aaaa"};
    const auto v = train_vocab(corpus, 6);
    REQUIRE(!v.merges.empty());
    CHECK(v.merges[0] == std::pair<std::string, std::string>{"a", "a"});
    CHECK(v.piece_to_id.count("aa") == 1);
    CHECK(v.size() <= 6);
}

TEST_CASE("train_vocab: single character corpus needs no merges") {
    const std::vector<std::string> corpus = {"x"};
    const auto v = train_vocab(corpus, 10);
    CHECK(v.merges.empty());
    CHECK(v.size() == Vocab::kNumSpecials + 1);
    CHECK(v.piece_to_id.count("x") == 1);
}

TEST_CASE("train_vocab: empty corpus is an input error") {
    CHECK_THROWS_AS(train_vocab(std::vector<std::string>{}, 100), DataError);
}

TEST_CASE("train_vocab: every piece is a substring of some normalized corpus line") {
    const std::vector<std::string> corpus = {"the cat sat on the mat", "a cat and a hat", "the mat sat flat"};
    const auto v = train_vocab(corpus, 64);
    std::vector<std::string> normalized;
    for (const auto& c : corpus) normalized.push_back(normalize_text(c));
    for (int id = Vocab::kNumSpecials; id < v.size(); ++id) {
        const auto& piece = v.id_to_piece[static_cast<size_t>(id)];
        bool found = false;
        for (const auto& line : normalized) {
            if (line.find(piece) != std::string::npos) {
                found = true;
                break;
            }
        }
        CHECK_MESSAGE(found, "piece not in corpus: \"", piece, "\"");
    }
}

TEST_CASE("train_vocab: deterministic for a fixed corpus") {
    const std::vector<std::string> corpus = {"banana bandana", "ban the banana"};
    const auto a = train_vocab(corpus, 32);
    const auto b = train_vocab(corpus, 32);
    CHECK(a.id_to_piece == b.id_to_piece);
    CHECK(a.merges == b.merges);
}

TEST_CASE("encode: empty text, unknown characters") {
    const std::vector<std::string> corpus = {"abc abd"};
    const auto v = train_vocab(corpus, 32);
    CHECK(encode(v, "").empty());
    const auto ids = encode(v, "axc");
    REQUIRE(ids.size() == 3);
    CHECK(ids[1] == Vocab::kUnk);
    CHECK(ids[0] != Vocab::kUnk);
}

TEST_CASE("decode: empty input and bare specials give empty text") {
    const std::vector<std::string> corpus = {"abc"};
    const auto v = train_vocab(corpus, 32);
    CHECK(decode(v, std::vector<int>{}) == "");
    CHECK(decode(v, std::vector<int>{Vocab::kPad, Vocab::kBos, Vocab::kEos}) == "");
    CHECK_THROWS_AS(decode(v, std::vector<int>{v.size()}), IndexError);
}

TEST_CASE("round trip: decode(encode(s)) == normalize(s) over known characters") {
    const std::vector<std::string> corpus = {"the quick brown fox jumps over the lazy dog",
                                             "pack my box with five dozen liquor jugs"};
    const auto v = train_vocab(corpus, 120);

    // Hand-rolled generator: random word sequences over the corpus alphabet.
    std::mt19937 rng(31);
    std::vector<std::string> words;
    for (const auto& line : corpus) {
        for (const auto& w : tokenize_words(line)) words.push_back(w);
    }
    std::uniform_int_distribution<size_t> pick(0, words.size() - 1);
    std::uniform_int_distribution<int> len(1, 8);
    for (int trial = 0; trial < 200; ++trial) {
        std::string text;
        const int n = len(rng);
        for (int i = 0; i < n; ++i) {
            if (!text.empty()) text += ' ';
            text += words[pick(rng)];
        }
        CHECK(decode(v, encode(v, text)) == normalize_text(text));
    }
    CHECK(decode(v, encode(v, "  The QUICK   fox ")) == "the quick fox");
}

TEST_CASE("encode: prefix-stable under concatenation at a word boundary") {
    const std::vector<std::string> corpus = {"alpha beta gamma delta", "beta delta alpha"};
    const auto v = train_vocab(corpus, 64);
    const auto a = encode(v, "alpha beta");
    const auto ab = encode(v, "alpha beta gamma");
    REQUIRE(ab.size() > a.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(ab[i] == a[i]);
}

TEST_CASE("vocab file: bit-exact round trip") {
    const std::vector<std::string> corpus = {"mississippi rivers", "missing pieces"};
    const auto v = train_vocab(corpus, 48);
    const auto dir = gcap::test::scratch_dir("vocab");
    save_vocab(v, dir / "v.txt");
    const auto v2 = load_vocab(dir / "v.txt");
    CHECK(v2.id_to_piece == v.id_to_piece);
    CHECK(v2.merges == v.merges);
    save_vocab(v2, dir / "v2.txt");
    std::ifstream f1(dir / "v.txt", std::ios::binary), f2(dir / "v2.txt", std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
}

TEST_CASE("specials are reserved: ids 0..3 never produced by encoding text") {
    const std::vector<std::string> corpus = {"pad bos eos unk plain words"};
    const auto v = train_vocab(corpus, 64);
    const auto ids = encode(v, "pad bos eos unk plain");
    for (int id : ids) CHECK(id >= Vocab::kNumSpecials);
}
