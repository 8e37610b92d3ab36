#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <actconv/checkpoint.hpp>
#include <actconv/data.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace actconv;

namespace {

std::string temp_file(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

struct Fixture {
    Network net;
    std::vector<std::vector<double>> velocities;
    PositionHistory history;
    std::string rng_state;

    explicit Fixture(std::uint64_t seed) {
        Rng rng(seed);
        net = instantiate_network(build_plain_network(0.25, 10, true), rng);
        // perturb so the payload is not all fresh-init patterns
        for (ParamRef& ref : learnable_params(net, nullptr))
            for (std::int64_t i = 0; i < ref.size; ++i)
                ref.value[i] += 0.001 * static_cast<double>(i % 17);
        for (auto& node : net.params)
            for (auto& sp : node.acu.positions)
                for (auto& pt : sp.points) pt.beta += 0.125;

        for (const ParamRef& ref : learnable_params(net, nullptr)) {
            std::vector<double> v(static_cast<std::size_t>(ref.size));
            for (std::size_t i = 0; i < v.size(); ++i)
                v[i] = rng.normal(0.0, 0.01);
            velocities.push_back(std::move(v));
        }
        history.entries.push_back({0, flatten_positions(net)});
        history.entries.push_back({100, flatten_positions(net)});
        history.entries.back().values[0] += 0.5;
        rng_state = rng.state();
    }
};

}  // namespace

TEST_CASE("checkpoint round trip is bitwise exact") {
    Fixture fx(31);
    const std::string path = temp_file("actconv_ckpt_rt.bin");
    save_checkpoint(path, fx.net, fx.velocities, 4242, fx.rng_state, fx.history);
    LoadedCheckpoint ck = load_checkpoint(path);

    CHECK(ck.iteration == 4242);
    CHECK(ck.rng_state == fx.rng_state);
    CHECK(serialize_network_spec(ck.net.spec) == serialize_network_spec(fx.net.spec));

    auto pa = learnable_params(fx.net, nullptr);
    auto pb = learnable_params(ck.net, nullptr);
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].name == pb[i].name);
        REQUIRE(pa[i].size == pb[i].size);
        for (std::int64_t j = 0; j < pa[i].size; ++j)
            CHECK(pa[i].value[j] == pb[i].value[j]);
    }

    REQUIRE(ck.velocities.size() == fx.velocities.size());
    for (std::size_t i = 0; i < fx.velocities.size(); ++i)
        CHECK(ck.velocities[i] == fx.velocities[i]);

    // positions, extents, bn running stats
    for (std::size_t i = 0; i < fx.net.params.size(); ++i) {
        const auto& a = fx.net.params[i];
        const auto& b = ck.net.params[i];
        REQUIRE(a.acu.positions.size() == b.acu.positions.size());
        for (std::size_t g = 0; g < a.acu.positions.size(); ++g)
            for (int k = 0; k < a.acu.positions[g].count(); ++k) {
                CHECK(a.acu.positions[g].points[static_cast<std::size_t>(k)].alpha ==
                      b.acu.positions[g].points[static_cast<std::size_t>(k)].alpha);
                CHECK(a.acu.positions[g].points[static_cast<std::size_t>(k)].beta ==
                      b.acu.positions[g].points[static_cast<std::size_t>(k)].beta);
            }
        CHECK(a.acu.lo_h == b.acu.lo_h);
        CHECK(a.acu.hi_w == b.acu.hi_w);
        CHECK(a.bn.running_mean == b.bn.running_mean);
        CHECK(a.bn.running_var == b.bn.running_var);
    }

    REQUIRE(ck.history.entries.size() == 2);
    CHECK(ck.history.entries[0].iter == 0);
    CHECK(ck.history.entries[1].iter == 100);
    CHECK(ck.history.entries[1].values == fx.history.entries[1].values);

    // a second save of the loaded state reproduces the file byte for byte
    const std::string path2 = temp_file("actconv_ckpt_rt2.bin");
    save_checkpoint(path2, ck.net, ck.velocities, ck.iteration, ck.rng_state,
                    ck.history);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)),
                   std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)),
                   std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("flatten_positions walks nodes in order") {
    Fixture fx(32);
    std::vector<double> flat = flatten_positions(fx.net);
    std::vector<double> manual;
    for (std::size_t i = 0; i < fx.net.spec.layers.size(); ++i) {
        if (fx.net.spec.layers[i].kind != LayerKind::acu) continue;
        for (const auto& sp : fx.net.params[i].acu.positions)
            for (const auto& pt : sp.points) {
                manual.push_back(pt.alpha);
                manual.push_back(pt.beta);
            }
    }
    CHECK(flat == manual);
    // six ACU layers x 9 synapses x 2 coords in the quarter-width column
    CHECK(flat.size() == 108);
}

TEST_CASE("missing file raises IoError") {
    CHECK_THROWS_AS(load_checkpoint(temp_file("actconv_no_such_ckpt.bin")), IoError);
}

TEST_CASE("bad magic raises IoError") {
    const std::string path = temp_file("actconv_bad_magic.bin");
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOTACKPTxxxxxxxxxxxxxxxxxxxxxxxxxxxxx";
    }
    CHECK_THROWS_AS(load_checkpoint(path), IoError);
    std::remove(path.c_str());
}

TEST_CASE("truncated file raises IoError") {
    Fixture fx(33);
    const std::string path = temp_file("actconv_trunc.bin");
    save_checkpoint(path, fx.net, fx.velocities, 7, fx.rng_state, fx.history);
    std::string bytes;
    {
        std::ifstream in(path, std::ios::binary);
        bytes.assign((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    }
    {
        std::ofstream out(path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(load_checkpoint(path), IoError);
    std::remove(path.c_str());
}
