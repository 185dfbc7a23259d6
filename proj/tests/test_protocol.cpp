#include <catch_amalgamated.hpp>

#include <chrono>
#include <cstring>
#include <random>

#include "mortfc/bridge.hpp"
#include "support.hpp"

using namespace mortfc;
using wire::MessageType;
using wire::WireMessage;

namespace {

std::string random_utf8(std::mt19937_64& rng)
{
    std::uniform_int_distribution<int> len(0, 12);
    std::uniform_int_distribution<int> kind(0, 3);
    std::string s;
    for (int n = len(rng); n > 0; --n) {
        std::uint32_t cp = 0;
        switch (kind(rng)) {
        case 0: cp = std::uniform_int_distribution<std::uint32_t>(0, 0x1f)(rng); break; // controls, incl. '\n'
        case 1: cp = static_cast<std::uint32_t>("\"\\/{}[]:,"[std::uniform_int_distribution<int>(0, 8)(rng)]); break;
        case 2: cp = std::uniform_int_distribution<std::uint32_t>(0x20, 0x7e)(rng); break;
        default:
            cp = std::uniform_int_distribution<std::uint32_t>(0x80, 0x10ffff)(rng);
            if (cp >= 0xd800 && cp <= 0xdfff) {
                cp = 0xe9;
            }
        }
        if (cp < 0x80) {
            s += static_cast<char>(cp);
        } else if (cp < 0x800) {
            s += static_cast<char>(0xc0 | (cp >> 6));
            s += static_cast<char>(0x80 | (cp & 0x3f));
        } else if (cp < 0x10000) {
            s += static_cast<char>(0xe0 | (cp >> 12));
            s += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
            s += static_cast<char>(0x80 | (cp & 0x3f));
        } else {
            s += static_cast<char>(0xf0 | (cp >> 18));
            s += static_cast<char>(0x80 | ((cp >> 12) & 0x3f));
            s += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
            s += static_cast<char>(0x80 | (cp & 0x3f));
        }
    }
    return s;
}

double random_finite(std::mt19937_64& rng)
{
    for (;;) {
        std::uint64_t bits = rng();
        double d;
        std::memcpy(&d, &bits, sizeof d);
        if (std::isfinite(d)) {
            return d;
        }
    }
}

WireMessage random_message(std::mt19937_64& rng)
{
    std::bernoulli_distribution coin(0.5);
    std::uniform_int_distribution<int> small(-5000, 5000);
    WireMessage m;
    m.type = static_cast<MessageType>(std::uniform_int_distribution<int>(0, 6)(rng));
    if (coin(rng)) {
        m.id = random_utf8(rng);
    }
    if (coin(rng)) {
        m.name = random_utf8(rng);
    }
    if (coin(rng)) {
        m.protocol = small(rng);
    }
    if (coin(rng)) {
        m.start_year = small(rng);
    }
    if (coin(rng)) {
        std::vector<double> v(static_cast<std::size_t>(std::uniform_int_distribution<int>(0, 30)(rng)));
        for (auto& x : v) {
            x = coin(rng) ? random_finite(rng) : std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        }
        m.values = v;
    }
    if (coin(rng)) {
        m.horizon = small(rng);
    }
    if (coin(rng)) {
        m.tag = random_utf8(rng);
    }
    if (coin(rng)) {
        m.message = random_utf8(rng);
    }
    if (coin(rng)) {
        m.path = random_utf8(rng);
    }
    if (coin(rng)) {
        m.params = nlohmann::json{{random_utf8(rng), small(rng)}, {"lr", random_finite(rng)}};
    }
    if (coin(rng)) {
        m.supports_training = coin(rng);
    }
    if (coin(rng)) {
        m.deterministic = coin(rng);
    }
    return m;
}

AdapterSpec fixture(const std::string& mode, std::vector<std::string> extra = {}, double timeout = 10.0)
{
    AdapterSpec s;
    s.name = "fx-" + mode;
    s.command = MORTFC_FIXTURE_ADAPTER;
    s.args = {mode};
    s.args.insert(s.args.end(), extra.begin(), extra.end());
    s.timeout_seconds = timeout;
    return s;
}

AdapterSpec constant_spec()
{
    AdapterSpec s;
    s.name = "Constant";
    s.command = MORTFC_CONSTANT_ADAPTER;
    return s;
}

std::vector<ForecastRequest> batch3()
{
    return {{"a", 1990, {0.1, 0.2, 0.30}, 4}, {"b", 1995, {0.5, 0.42}, 2}, {"c", 2000, {0.7, 0.8, 0.9, 0.11}, 3}};
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

TEST_CASE("wire messages survive an encode/decode round trip")
{
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 1000; ++i) {
        auto m = random_message(rng);
        const auto line = wire::encode(m);
        CHECK(line.find('\n') == std::string::npos);
        CHECK(wire::decode(line) == m);
    }
}

TEST_CASE("wire field names are fixed")
{
    WireMessage m;
    m.type = MessageType::Forecast;
    m.id = "7";
    m.start_year = 1990;
    m.values = std::vector<double>{0.5};
    m.horizon = 3;
    m.tag = "t";
    CHECK(wire::encode(m) == R"({"horizon":3,"id":"7","start_year":1990,"tag":"t","type":"forecast","values":[0.5]})");
    auto hello = wire::decode(R"({"type":"hello","name":"constant","protocol":1})");
    CHECK(hello.type == MessageType::Hello);
    CHECK(hello.name == "constant");
    CHECK(hello.protocol == 1);
    CHECK(hello.id.empty());
}

TEST_CASE("malformed wire lines are rejected")
{
    for (const char* bad : {"", "hello", "[1,2]", R"({"id":"1"})", R"({"type":"shout"})", R"({"type":"forecast","values":[1,"x"]})",
                            R"({"type":"forecast","horizon":"5"})"}) {
        CHECK_THROWS_AS(wire::decode(bad), wire::ProtocolError);
    }
    WireMessage m;
    m.type = MessageType::ForecastResult;
    m.values = std::vector<double>{1.0, std::nan("")};
    CHECK_THROWS_AS(wire::encode(m), wire::ProtocolError);
}

TEST_CASE("constant adapter handshake and forecasts")
{
    AdapterHandle h(constant_spec());
    CHECK(h.adapter_name() == "constant");
    CHECK_FALSE(h.supports_training());
    CHECK(h.deterministic());
    auto out = h.request_forecast({{"x", 2000, {0.1, 0.3, 0.42}, 5}});
    REQUIRE(out.size() == 1);
    REQUIRE(out[0].ok());
    CHECK(*out[0].values == std::vector<double>(5, 0.42));
    CHECK_THROWS_AS(h.request_training("/nonexistent.csv", nlohmann::json::object()), CapabilityError);
}

TEST_CASE("deterministic adapters repeat their answers")
{
    AdapterHandle h(constant_spec());
    auto first = h.request_forecast(batch3());
    auto second = h.request_forecast(batch3());
    REQUIRE(first.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(first[i].values == second[i].values);
    }
}

TEST_CASE("launch and handshake failures")
{
    auto missing = fixture("normal");
    missing.command = "/nonexistent/adapter-binary";
    CHECK_THROWS_WITH(AdapterHandle(missing), Catch::Matchers::ContainsSubstring("cannot launch"));
    CHECK_THROWS_WITH(AdapterHandle(fixture("garbage-first")), Catch::Matchers::ContainsSubstring("loading model weights..."));
    CHECK_THROWS_WITH(AdapterHandle(fixture("bad-protocol")), Catch::Matchers::ContainsSubstring("protocol version 2"));

    const auto t0 = std::chrono::steady_clock::now();
    CHECK_THROWS_AS(AdapterHandle(fixture("silent", {}, 1.0)), AdapterError);
    CHECK(seconds_since(t0) < 2.0);
}

TEST_CASE("responses are matched by id")
{
    AdapterHandle h(fixture("reverse-order"));
    auto out = h.request_forecast(batch3());
    REQUIRE(out.size() == 3);
    CHECK(out[0].id == "a");
    CHECK(*out[0].values == std::vector<double>(4, 0.30));
    CHECK(*out[1].values == std::vector<double>(2, 0.42));
    CHECK(*out[2].values == std::vector<double>(3, 0.11));
}

TEST_CASE("batches larger than batch_size are split")
{
    auto spec = fixture("normal");
    spec.batch_size = 2;
    AdapterHandle h(spec);
    std::vector<ForecastRequest> reqs;
    for (int i = 0; i < 7; ++i) {
        reqs.push_back({"s" + std::to_string(i), 2000, {0.01 * (i + 1)}, 3});
    }
    auto out = h.request_forecast(reqs);
    REQUIRE(out.size() == 7);
    for (int i = 0; i < 7; ++i) {
        REQUIRE(out[static_cast<std::size_t>(i)].ok());
        CHECK(out[static_cast<std::size_t>(i)].values->front() == 0.01 * (i + 1));
    }
}

TEST_CASE("short answers are malformed")
{
    AdapterHandle h(fixture("short"));
    auto out = h.request_forecast(batch3());
    for (const auto& o : out) {
        CHECK_FALSE(o.ok());
        CHECK(o.error.find("malformed") != std::string::npos);
    }
}

TEST_CASE("timeouts fail every outstanding id promptly")
{
    AdapterHandle h(fixture("slow", {"5"}, 1.0));
    const auto t0 = std::chrono::steady_clock::now();
    auto out = h.request_forecast(batch3());
    CHECK(seconds_since(t0) <= 2.0);
    for (const auto& o : out) {
        CHECK_FALSE(o.ok());
        CHECK(o.error.find("timed out") != std::string::npos);
    }
}

TEST_CASE("a crashed adapter restarts once")
{
    testing::TempDir dir;
    auto marker = (dir.path() / "crashed").string();
    AdapterHandle h(fixture("crash-once", {marker}));
    auto first = h.request_forecast(batch3());
    for (const auto& o : first) {
        CHECK_FALSE(o.ok());
        CHECK(o.error.find("exited") != std::string::npos);
    }
    auto second = h.request_forecast(batch3());
    for (const auto& o : second) {
        CHECK(o.ok());
    }
    CHECK(h.restarts() == 1);
    CHECK(h.usable());
}

TEST_CASE("an adapter crashing again is excluded")
{
    AdapterHandle h(fixture("crash-always"));
    auto first = h.request_forecast(batch3());
    auto second = h.request_forecast(batch3());
    auto third = h.request_forecast(batch3());
    for (const auto* round : {&first, &second, &third}) {
        for (const auto& o : *round) {
            CHECK_FALSE(o.ok());
        }
    }
    CHECK(third[0].error.find("unavailable") != std::string::npos);
    CHECK_FALSE(h.usable());
    CHECK(h.restarts() == 1);
}

TEST_CASE("training returns a tag derived from the exported data")
{
    testing::TempDir dir;
    const auto csv = dir.path() / "pool.csv";
    const std::string body = "country,age,target_year,x1,target\nAAA,0,2000,0.1,0.2\n";
    testing::write_text(csv, body);
    Fnv1a fp;
    fp.update(body);

    AdapterHandle h(fixture("echo-trainer"));
    CHECK(h.supports_training());
    auto untrained = h.request_forecast(batch3());
    auto tag = h.request_training(csv.string(), {{"epochs", 1}});
    CHECK(tag == "fp-" + hex64(fp.digest()));
    CHECK(h.model_tag() == tag);
    auto trained = h.request_forecast(batch3());
    bool differs = false;
    for (std::size_t i = 0; i < 3; ++i) {
        REQUIRE(trained[i].ok());
        differs = differs || trained[i].values != untrained[i].values;
    }
    CHECK(differs);
}

TEST_CASE("adapter registry parsing")
{
    testing::TempDir dir;
    const auto reg = dir.path() / "adapters.json";
    testing::write_text(reg, R"({"adapters":[
        {"name":"CHRONOSLarge","command":"bin/chronos","args":["--size","large"],"env":{"DEVICE":"cpu"},"timeout_seconds":5,"batch_size":8},
        {"name":"Constant","command":"constant_adapter","train":false,"params":{"a":1}}]})");
    auto specs = read_adapter_registry(reg);
    REQUIRE(specs.size() == 2);
    CHECK(specs[0].command == (dir.path() / "bin/chronos").string());
    CHECK(specs[0].args == std::vector<std::string>{"--size", "large"});
    CHECK(specs[0].env.at("DEVICE") == "cpu");
    CHECK(specs[0].timeout_seconds == 5.0);
    CHECK(specs[0].batch_size == 8);
    CHECK(specs[1].command == "constant_adapter");
    CHECK(specs[1].train_params == nlohmann::json{{"a", 1}});

    testing::write_text(reg, R"({"adapters":[{"name":"A","command":"x"},{"name":"A","command":"y"}]})");
    CHECK_THROWS_AS(read_adapter_registry(reg), FormatError);
    testing::write_text(reg, R"({"adapters":[{"name":"A","command":"x","timeout_seconds":0}]})");
    CHECK_THROWS_AS(read_adapter_registry(reg), FormatError);
    testing::write_text(reg, R"({"adapters":[{"command":"x"}]})");
    CHECK_THROWS_AS(read_adapter_registry(reg), FormatError);
    CHECK_THROWS_AS(read_adapter_registry(dir.path() / "missing.json"), DataError);
}

TEST_CASE("pool starts adapters lazily and shares handles")
{
    AdapterPool pool({constant_spec()});
    CHECK(pool.has("Constant"));
    CHECK_FALSE(pool.has("Other"));
    auto a = pool.get("Constant");
    auto b = pool.get("Constant");
    CHECK(a.get() == b.get());
    CHECK_THROWS_AS(pool.get("Other"), AdapterError);
}
