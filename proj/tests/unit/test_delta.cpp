#include <doctest.h>

#include <filesystem>

#include "test_util.hpp"
#include "zfda/delta.hpp"
#include "zfda/digest.hpp"
#include "zfda/io_util.hpp"
#include "zfda/rng.hpp"
#include "zfda/sam.hpp"

using namespace zfda;
using namespace zfda::test;

namespace {

ModelParams small_model(uint64_t seed = 3) {
    return build_autoencoder({dense_spec(5, 4), activation_spec(LayerKind::ReLU), dense_spec(4, 2)},
                             {dense_spec(2, 5)}, {5}, seed);
}

DeltaPatch random_patch(const ModelParams& m, double gamma, uint64_t seed) {
    SamState sam = init_sam(m, gamma, seed);
    Rng rng(seed + 1);
    for (SamLayer& l : sam.layers)
        for (int64_t i = 0; i < l.param_count; ++i)
            if (l.mask[i]) l.values[i] = rng.normal();
    return extract_delta(sam, m);
}

}  // namespace

TEST_CASE("sha256 known-answer vectors") {
    const std::string empty_digest = digest_hex(sha256(nullptr, 0));
    CHECK(empty_digest == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    const std::string abc = "abc";
    CHECK(digest_hex(sha256(reinterpret_cast<const uint8_t*>(abc.data()), 3)) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(digest_from_hex(empty_digest) == sha256(nullptr, 0));
}

TEST_CASE("any single-bit parameter flip changes the digest") {
    ModelParams m = small_model();
    const Sha256 base = model_digest(m);
    m.enc_params[0].data[3] = std::nextafter(m.enc_params[0].data[3], 1.0f);
    CHECK(model_digest(m) != base);
    const ModelParams other = small_model(4);
    CHECK(model_digest(other) != base);
}

TEST_CASE("patch encode/decode round trip is structurally identical and byte deterministic") {
    const ModelParams m = small_model();
    const DeltaPatch patch = random_patch(m, 0.3, 7);
    const std::vector<uint8_t> bytes = encode_patch(patch);
    CHECK(bytes == encode_patch(patch));
    const DeltaPatch back = decode_patch(bytes, "test");
    CHECK(back.model_digest == patch.model_digest);
    CHECK(back.gamma == patch.gamma);
    REQUIRE(back.layers.size() == patch.layers.size());
    for (size_t k = 0; k < back.layers.size(); ++k) {
        CHECK(back.layers[k].layer_id == patch.layers[k].layer_id);
        REQUIRE(back.layers[k].entries.size() == patch.layers[k].entries.size());
        for (size_t i = 0; i < back.layers[k].entries.size(); ++i) {
            CHECK(back.layers[k].entries[i].index == patch.layers[k].entries[i].index);
            CHECK(back.layers[k].entries[i].adapted == patch.layers[k].entries[i].adapted);
            CHECK(back.layers[k].entries[i].original == patch.layers[k].entries[i].original);
        }
    }
    CHECK(encode_patch(back) == bytes);
}

TEST_CASE("patch file size follows the format arithmetic") {
    const ModelParams m = small_model();
    SamState sam = init_sam(m, 1e-6, 1);
    for (SamLayer& l : sam.layers) REQUIRE(l.keep == 0);
    const DeltaPatch empty = extract_delta(sam, m);
    // Header: magic 4 + version 2 + flags 2 + digest 32 + gamma 8 + count 4.
    const size_t header = 52;
    CHECK(encode_patch(empty).size() == header + empty.layers.size() * 12);

    const DeltaPatch patch = random_patch(m, 0.25, 9);
    CHECK(encode_patch(patch).size() ==
          header + patch.layers.size() * 12 + static_cast<size_t>(patch.entry_count()) * 12);
}

TEST_CASE("apply/revert round trip restores byte-identical parameters") {
    const ModelParams pristine = small_model(11);
    const DeltaPatch patch = random_patch(pristine, 0.4, 12);
    REQUIRE(patch.entry_count() > 0);
    const ModelParams adapted = apply_patch(pristine, patch);
    CHECK(canonical_param_bytes(adapted) != canonical_param_bytes(pristine));
    const ModelParams restored = revert_patch(adapted, patch);
    CHECK(canonical_param_bytes(restored) == canonical_param_bytes(pristine));
    // Idempotent restore.
    const ModelParams restored2 = revert_patch(restored, patch);
    CHECK(canonical_param_bytes(restored2) == canonical_param_bytes(pristine));
}

TEST_CASE("hand example: one entry overwrites index 1") {
    ModelParams m = build_model({dense_spec(3, 1, false)}, {}, {3}, 0);
    m.enc_params[0].data = {1.0f, 2.0f, 3.0f};
    DeltaPatch patch;
    patch.model_digest = model_digest(m);
    patch.gamma = 0.5;
    patch.layers.push_back({0, {{1, 2.25f, 2.0f}}});
    const ModelParams adapted = apply_patch(m, patch);
    CHECK(adapted.enc_params[0].data == std::vector<float>{1.0f, 2.25f, 3.0f});

    // Empty patch leaves parameters unchanged bit-exactly.
    DeltaPatch empty;
    empty.model_digest = model_digest(m);
    empty.gamma = 0.5;
    CHECK(canonical_param_bytes(apply_patch(m, empty)) == canonical_param_bytes(m));
}

TEST_CASE("digest contract: second apply refused, foreign patches refused") {
    const ModelParams pristine = small_model(13);
    const DeltaPatch patch = random_patch(pristine, 0.4, 14);
    const ModelParams adapted = apply_patch(pristine, patch);
    CHECK_THROWS_AS(apply_patch(adapted, patch), DigestError);

    const ModelParams other = small_model(15);
    CHECK_THROWS_AS(apply_patch(other, patch), DigestError);
    CHECK_THROWS_AS(revert_patch(other, patch), DigestError);
    CHECK(verify_digest(pristine, patch));
    CHECK_FALSE(verify_digest(other, patch));
}

TEST_CASE("tampering an untouched index is caught at restore") {
    const ModelParams pristine = small_model(16);
    const DeltaPatch patch = random_patch(pristine, 0.3, 17);
    ModelParams adapted = apply_patch(pristine, patch);
    // Flip a parameter the patch does not cover (last decoder entry).
    Tensor& t = adapted.dec_params[0];
    t.data[t.numel() - 1] = std::nextafter(t.data[t.numel() - 1], 10.0f);
    bool covered = false;
    for (const auto& l : patch.layers)
        if (l.layer_id == 3)
            for (const auto& e : l.entries) covered |= e.index == static_cast<uint32_t>(t.numel() - 1);
    if (!covered) CHECK_THROWS_AS(revert_patch(adapted, patch), DigestError);
}

TEST_CASE("export requires the matching pristine model; load validates structure") {
    const std::string dir = scratch_dir("delta");
    const ModelParams pristine = small_model(18);
    const DeltaPatch patch = random_patch(pristine, 0.4, 19);
    const std::string path = dir + "/p.zfp";
    export_patch(patch, pristine, path);
    const DeltaPatch loaded = load_patch(path);
    CHECK(encode_patch(loaded) == encode_patch(patch));

    const ModelParams other = small_model(20);
    CHECK_THROWS_AS(export_patch(patch, other, path), DigestError);

    std::vector<uint8_t> bytes = encode_patch(patch);
    std::vector<uint8_t> bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_patch(bad, "t"), DataError);
    bad = bytes;
    bad[4] = 9;  // version
    CHECK_THROWS_AS(decode_patch(bad, "t"), DataError);
    bad = bytes;
    bad.resize(bytes.size() - 5);  // truncated
    CHECK_THROWS_AS(decode_patch(bad, "t"), DataError);
    bad = bytes;
    bad.push_back(0);  // trailing garbage
    CHECK_THROWS_AS(decode_patch(bad, "t"), DataError);
}

TEST_CASE("out-of-range and unsorted indices are rejected") {
    ModelParams m = build_model({dense_spec(3, 1, false)}, {}, {3}, 0);
    DeltaPatch patch;
    patch.model_digest = model_digest(m);
    patch.gamma = 0.5;
    patch.layers.push_back({0, {{7, 1.0f, 1.0f}}});  // index >= p_k
    CHECK_THROWS_AS(apply_patch(m, patch), DataError);
    patch.layers[0].entries = {{2, 1.0f, 1.0f}, {1, 1.0f, 1.0f}};  // unsorted
    const std::vector<uint8_t> bytes = encode_patch(patch);
    CHECK_THROWS_AS(decode_patch(bytes, "t"), DataError);
    patch.layers[0].entries = {{1, 1.0f, 1.0f}, {1, 2.0f, 2.0f}};  // duplicate
    CHECK_THROWS_AS(decode_patch(encode_patch(patch), "t"), DataError);
    patch.layers[0] = {9, {{0, 1.0f, 1.0f}}};  // layer id out of range
    CHECK_THROWS_AS(apply_patch(m, patch), DataError);
}
