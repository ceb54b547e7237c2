#include <catch2/catch_amalgamated.hpp>

#include <numeric>
#include <random>

#include "helpers.hpp"
#include "semsplat/vecstore.hpp"

using namespace semsplat;

namespace {

std::vector<float> random_vec(std::mt19937_64& rng, uint32_t dim, bool normalize = false) {
    std::vector<float> v(dim);
    for (auto& x : v) x = static_cast<float>(testutil::urand(rng, -1, 1));
    if (normalize) v = normalized_copy(v.data(), v.size());
    return v;
}

VectorStore random_store(size_t count, uint32_t dim, uint64_t seed) {
    std::mt19937_64 rng(seed);
    VectorStore store(dim);
    store.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        Gaussian3D g;
        g.id = static_cast<uint32_t>(i);
        g.mean = Eigen::Vector3f(static_cast<float>(testutil::urand(rng, -10, 10)),
                                 static_cast<float>(testutil::urand(rng, -10, 10)),
                                 static_cast<float>(testutil::urand(rng, -10, 10)));
        store.add_record(static_cast<uint32_t>(i), random_vec(rng, dim, true), g);
    }
    return store;
}

// Full-argsort brute-force ranking oracle; shares only the score primitive.
std::vector<ScoredId> oracle_rank(const VectorStore& store, const std::vector<float>& q) {
    const std::vector<float> qn = normalized_copy(q.data(), q.size());
    std::vector<ScoredId> all(store.count());
    for (size_t i = 0; i < store.count(); ++i)
        all[i] = {store.id_at(i), dot_lanes(store.vector_at(i), qn.data(), store.dim())};
    std::sort(all.begin(), all.end(), [](const ScoredId& a, const ScoredId& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.gaussian_id < b.gaussian_id;
    });
    return all;
}

} // namespace

TEST_CASE("dot_lanes matches a double reference", "[vecstore]") {
    std::mt19937_64 rng(12);
    for (uint32_t dim : {3u, 8u, 64u, 513u}) {
        const std::vector<float> a = random_vec(rng, dim), b = random_vec(rng, dim);
        double ref = 0;
        for (uint32_t d = 0; d < dim; ++d) ref += static_cast<double>(a[d]) * b[d];
        CHECK(dot_lanes(a.data(), b.data(), dim) == Catch::Approx(ref).epsilon(1e-5).margin(1e-5));
    }
}

TEST_CASE("build_store keeps covered rows only, normalized, with payloads", "[vecstore]") {
    const GaussianScene scene = testutil::random_scene(5, 61);
    EmbeddingTable table(5, 4);
    std::mt19937_64 rng(62);
    // rows 1 and 3 covered
    for (uint64_t k : {1, 3}) {
        for (uint32_t d = 0; d < 4; ++d) table.row(k)[d] = static_cast<float>(testutil::urand(rng, -1, 1));
        table.coverage[k] = 2.5f;
    }
    const VectorStore store = build_store(table, scene);
    REQUIRE(store.count() == 2);
    CHECK(store.id_at(0) == 1);
    CHECK(store.id_at(1) == 3);
    for (size_t i = 0; i < store.count(); ++i) {
        double norm = 0;
        for (uint32_t d = 0; d < 4; ++d)
            norm += static_cast<double>(store.vector_at(i)[d]) * store.vector_at(i)[d];
        CHECK(std::sqrt(norm) == Catch::Approx(1.0).margin(1e-6));
        // stored vector is row / ||row||
        const std::vector<float> expected = normalized_copy(table.row(store.id_at(i)), 4);
        for (uint32_t d = 0; d < 4; ++d) CHECK(store.vector_at(i)[d] == expected[d]);
    }

    SECTION("payload fields equal the scene fields for every id") {
        for (size_t i = 0; i < store.count(); ++i) {
            const Gaussian3D& a = store.payload_at(i);
            const Gaussian3D& b = scene[store.id_at(i)];
            CHECK(a.mean == b.mean);
            CHECK(a.scale == b.scale);
            CHECK(a.opacity == b.opacity);
            CHECK(a.color == b.color);
            CHECK(a.rotation.coeffs() == b.rotation.coeffs());
        }
    }

    SECTION("size mismatch violates the contract") {
        CHECK_THROWS_AS(build_store(EmbeddingTable(4, 4), scene), ContractError);
    }
}

TEST_CASE("query answers match analytic cases", "[vecstore]") {
    VectorStore store(3);
    Gaussian3D g;
    store.add_record(0, {1.f, 0.f, 0.f}, g);
    store.add_record(1, {0.f, 1.f, 0.f}, g);
    store.add_record(2, {0.f, 0.f, 1.f}, g);

    SECTION("a stored vector retrieves itself first with similarity 1") {
        const auto res = query_topk(store, {0.f, 1.f, 0.f}, 2);
        REQUIRE(res.size() == 2);
        CHECK(res[0].gaussian_id == 1);
        CHECK(res[0].similarity == Catch::Approx(1.0).margin(1e-6));
    }

    SECTION("orthogonal query scores zero everywhere") {
        VectorStore plane(3);
        plane.add_record(0, {1.f, 0.f, 0.f}, g);
        plane.add_record(1, {0.f, 1.f, 0.f}, g);
        const auto res = query_topk(plane, {0.f, 0.f, 2.f}, 5);
        REQUIRE(res.size() == 2); // k > count returns all
        for (const auto& r : res) CHECK(std::abs(r.similarity) < 1e-6f);
    }

    SECTION("threshold -1 returns everything, descending") {
        const auto res = query_threshold(store, {1.f, 0.5f, 0.f}, -1.0f);
        REQUIRE(res.size() == 3);
        CHECK(res[0].gaussian_id == 0);
        CHECK(std::is_sorted(res.begin(), res.end(),
                             [](const ScoredId& a, const ScoredId& b) { return a.similarity > b.similarity; }));
    }

    SECTION("threshold outside [-1,1] violates the precondition") {
        CHECK_THROWS_AS(query_threshold(store, {1.f, 0.f, 0.f}, 1.0f + 1e-3f), ContractError);
    }

    SECTION("zero query cannot be normalized") {
        CHECK_THROWS_AS(query_topk(store, {0.f, 0.f, 0.f}, 1), NumericError);
    }

    SECTION("dimension mismatch") {
        CHECK_THROWS_AS(query_topk(store, {1.f, 0.f}, 1), ContractError);
    }
}

TEST_CASE("queries match the brute-force argsort oracle exactly", "[vecstore]") {
    const uint32_t dim = 64;
    const VectorStore store = random_store(10000, dim, 1234);
    std::mt19937_64 rng(4321);

    for (int trial = 0; trial < 20; ++trial) {
        const std::vector<float> q = random_vec(rng, dim);
        const std::vector<ScoredId> oracle = oracle_rank(store, q);

        const auto topk = query_topk(store, q, 37);
        REQUIRE(topk.size() == 37);
        for (size_t i = 0; i < topk.size(); ++i) {
            REQUIRE(topk[i].gaussian_id == oracle[i].gaussian_id);
            REQUIRE(topk[i].similarity == oracle[i].similarity);
        }

        const float tau = 0.05f;
        const auto thresh = query_threshold(store, q, tau);
        size_t expected = 0;
        while (expected < oracle.size() && oracle[expected].similarity >= tau) ++expected;
        REQUIRE(thresh.size() == expected);
        for (size_t i = 0; i < thresh.size(); ++i) {
            REQUIRE(thresh[i].gaussian_id == oracle[i].gaussian_id);
            REQUIRE(thresh[i].similarity == oracle[i].similarity);
        }
    }
}

TEST_CASE("ties break by ascending gaussian id", "[vecstore]") {
    VectorStore store(2);
    Gaussian3D g;
    store.add_record(9, {1.f, 0.f}, g);
    store.add_record(3, {1.f, 0.f}, g);
    store.add_record(7, {1.f, 0.f}, g);
    const auto res = query_topk(store, {1.f, 0.f}, 3);
    REQUIRE(res.size() == 3);
    CHECK(res[0].gaussian_id == 3);
    CHECK(res[1].gaussian_id == 7);
    CHECK(res[2].gaussian_id == 9);
}

TEST_CASE("store build is order-independent", "[vecstore]") {
    std::mt19937_64 rng(71);
    const uint32_t dim = 8;
    std::vector<std::pair<uint32_t, std::vector<float>>> records;
    for (uint32_t i = 0; i < 50; ++i) records.emplace_back(i, random_vec(rng, dim, true));

    VectorStore forward(dim), backward(dim);
    Gaussian3D g;
    for (const auto& [id, v] : records) forward.add_record(id, v, g);
    for (auto it = records.rbegin(); it != records.rend(); ++it) backward.add_record(it->first, it->second, g);

    const std::vector<float> q = random_vec(rng, dim);
    const auto a = query_topk(forward, q, 50);
    const auto b = query_topk(backward, q, 50);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].gaussian_id == b[i].gaussian_id);
        CHECK(a[i].similarity == b[i].similarity);
    }
}

TEST_CASE("partitioning tiles the store without overlap", "[vecstore]") {
    const VectorStore store = random_store(500, 8, 99);

    SECTION("cell size covering the bbox gives one snapshot") {
        const auto snaps = partition_store(store, 100.0);
        REQUIRE(snaps.size() == 1);
        CHECK(snaps[0].store.count() == store.count());
    }

    SECTION("union of snapshots is the store, ids disjoint") {
        for (double cell : {3.0, 7.5, 14.0}) {
            const auto snaps = partition_store(store, cell);
            std::set<uint32_t> seen;
            size_t total = 0;
            for (const auto& snap : snaps) {
                total += snap.store.count();
                for (size_t i = 0; i < snap.store.count(); ++i) {
                    CHECK_FALSE(seen.count(snap.store.id_at(i)));
                    seen.insert(snap.store.id_at(i));
                    // payload mean lies inside the cell bounds
                    CHECK(snap.bounds.contains(snap.store.payload_at(i).mean.cast<double>()));
                }
            }
            CHECK(total == store.count());
            CHECK(seen.size() == store.count());
        }
    }

    SECTION("boundary point goes to the higher cell") {
        VectorStore tiny(2);
        Gaussian3D a, b;
        a.mean = {0.f, 0.f, 0.f};
        b.mean = {1.f, 0.f, 0.f}; // exactly one cell_size away
        tiny.add_record(0, {1.f, 0.f}, a);
        tiny.add_record(1, {1.f, 0.f}, b);
        const auto snaps = partition_store(tiny, 1.0);
        REQUIRE(snaps.size() == 2);
        CHECK(snaps[0].cell.x() == 0);
        CHECK(snaps[1].cell.x() == 1);
        REQUIRE(snaps[1].store.count() == 1);
        CHECK(snaps[1].store.id_at(0) == 1);
    }

    SECTION("non-positive cell size violates the contract") {
        CHECK_THROWS_AS(partition_store(store, 0.0), ContractError);
    }
}

TEST_CASE("select_partitions is sound for radius queries", "[vecstore]") {
    const VectorStore store = random_store(400, 8, 123);
    const auto snaps = partition_store(store, 5.0);
    std::mt19937_64 rng(321);

    SECTION("radius 0 at a record's mean still includes its cell") {
        const Eigen::Vector3d center = store.payload_at(17).mean.cast<double>();
        const VectorStore sel = select_partitions(snaps, center, 0.0);
        bool found = false;
        for (size_t i = 0; i < sel.count(); ++i)
            if (sel.id_at(i) == store.id_at(17)) found = true;
        CHECK(found);
    }

    SECTION("radius covering the bbox returns the full store") {
        const VectorStore sel = select_partitions(snaps, Eigen::Vector3d::Zero(), 1000.0);
        CHECK(sel.count() == store.count());
    }

    SECTION("every record within the radius is selected") {
        for (int trial = 0; trial < 25; ++trial) {
            const Eigen::Vector3d center(testutil::urand(rng, -12, 12), testutil::urand(rng, -12, 12),
                                         testutil::urand(rng, -12, 12));
            const double radius = testutil::urand(rng, 0, 10);
            const VectorStore sel = select_partitions(snaps, center, radius);
            std::set<uint32_t> selected;
            for (size_t i = 0; i < sel.count(); ++i) selected.insert(sel.id_at(i));
            for (size_t i = 0; i < store.count(); ++i) {
                const double dist = (store.payload_at(i).mean.cast<double>() - center).norm();
                if (dist <= radius) CHECK(selected.count(store.id_at(i)) == 1);
            }
        }
    }

    SECTION("querying the merged subset equals the restricted full-store query") {
        const Eigen::Vector3d center(1.0, -2.0, 3.0);
        const VectorStore sel = select_partitions(snaps, center, 6.0);
        std::set<uint32_t> selected;
        for (size_t i = 0; i < sel.count(); ++i) selected.insert(sel.id_at(i));

        const std::vector<float> q = random_vec(rng, 8);
        const auto merged_res = query_topk(sel, q, sel.count());
        auto full_res = query_topk(store, q, store.count());
        full_res.erase(std::remove_if(full_res.begin(), full_res.end(),
                                      [&](const ScoredId& s) { return !selected.count(s.gaussian_id); }),
                       full_res.end());
        REQUIRE(merged_res.size() == full_res.size());
        for (size_t i = 0; i < merged_res.size(); ++i) {
            CHECK(merged_res[i].gaussian_id == full_res[i].gaussian_id);
            CHECK(merged_res[i].similarity == full_res[i].similarity);
        }
    }
}

TEST_CASE("snapshot files round-trip", "[vecstore]") {
    testutil::TempDir tmp("snapshot");
    const VectorStore store = random_store(60, 6, 17);
    const auto snaps = partition_store(store, 8.0);
    REQUIRE_FALSE(snaps.empty());

    const PartitionSnapshot& snap = snaps.front();
    save_snapshot(snap, tmp.file("s.snap"));
    const PartitionSnapshot back = load_snapshot(tmp.file("s.snap"));
    CHECK(back.cell == snap.cell);
    CHECK((back.bounds.min - snap.bounds.min).norm() == 0.0);
    CHECK((back.bounds.max - snap.bounds.max).norm() == 0.0);
    REQUIRE(back.store.count() == snap.store.count());
    for (size_t i = 0; i < back.store.count(); ++i) {
        CHECK(back.store.id_at(i) == snap.store.id_at(i));
        for (uint32_t d = 0; d < 6; ++d) CHECK(back.store.vector_at(i)[d] == snap.store.vector_at(i)[d]);
        CHECK(back.store.payload_at(i).mean == snap.store.payload_at(i).mean);
        CHECK(back.store.payload_at(i).opacity == snap.store.payload_at(i).opacity);
    }

    SECTION("zero-count snapshot stays loadable") {
        PartitionSnapshot empty;
        empty.store = VectorStore(6);
        save_snapshot(empty, tmp.file("empty.snap"));
        CHECK(load_snapshot(tmp.file("empty.snap")).store.count() == 0);
    }

    SECTION("corrupted magic is rejected") {
        std::ofstream os(tmp.file("bad.snap"), std::ios::binary);
        os << "garbage garbage garbage garbage";
        os.close();
        CHECK_THROWS_AS(load_snapshot(tmp.file("bad.snap")), FormatError);
    }

    SECTION("snapshot manifest round-trips") {
        std::vector<SnapshotManifestEntry> entries;
        for (const auto& s : snaps)
            entries.push_back({s.cell, s.bounds, s.store.count(), "cell_" + std::to_string(s.cell.x()) + ".snap"});
        save_snapshot_manifest(entries, tmp.file("snaps.txt"));
        const auto back_entries = load_snapshot_manifest(tmp.file("snaps.txt"));
        REQUIRE(back_entries.size() == entries.size());
        for (size_t i = 0; i < entries.size(); ++i) {
            CHECK(back_entries[i].cell == entries[i].cell);
            CHECK(back_entries[i].count == entries[i].count);
            CHECK(back_entries[i].path == entries[i].path);
            CHECK((back_entries[i].bounds.min - entries[i].bounds.min).norm() == 0.0);
        }
    }
}
