#include <gtest/gtest.h>

#include <json.hpp>
#include <sstream>

#include "latentprobe/protocol.hpp"
#include "latentprobe/rng.hpp"
#include "test_support.hpp"

using namespace latentprobe;

namespace {

LatentVector vec(std::initializer_list<double> xs) {
  LatentVector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

/// Counts calls and fails on a chosen pair.
class CountingBackend final : public DecisionBackend {
 public:
  std::string identity() const override { return "counting"; }
  double distance(std::string_view, const ImageRef& a, const ImageRef& b) override {
    ++calls;
    if (a.path == "images/noface" || b.path == "images/noface") throw ProtocolError("no_face", "no face found");
    return static_cast<double>(a.path.size() + b.path.size()) / 100.0;
  }
  int calls = 0;
};

}  // namespace

TEST(SyntheticWorld, GenerateDecodesToTheSameLatent) {
  SyntheticWorld world(8, 1.0, std::make_shared<MemoryImageStore>());
  SeededRng rng(5, "w");
  const auto v = random_latent(rng, 8);
  const auto ref = world.generate(v);
  EXPECT_EQ(world.decode(ref), v);
  EXPECT_EQ(world.generate(v), ref);
  EXPECT_TRUE(is_safe_image_ref(ref.path));
  EXPECT_THROW(world.generate(LatentVector::Zero(7)), DimensionError);
}

TEST(SyntheticWorld, ReferencesDependOnWorldIdentity) {
  auto store = std::make_shared<MemoryImageStore>();
  SyntheticWorld a(2, 1.0, store), b(2, 1.0, store);
  SyntheticWorld c(3, 1.0, store);
  EXPECT_EQ(a.generate(vec({1, 2})), b.generate(vec({1, 2})));
  EXPECT_NE(a.identity(), c.identity());
}

TEST(SyntheticWorld, DirectoryStorePersistsImages) {
  testing_support::TempDir dir;
  auto store = std::make_shared<DirectoryImageStore>(dir.path());
  SyntheticWorld world(3, 1.0, store);
  const auto ref = world.generate(vec({0.5, -1, 2}));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / ref.path));
  SyntheticWorld reopened(3, 1.0, std::make_shared<DirectoryImageStore>(dir.path()));
  EXPECT_EQ(reopened.decode(ref), vec({0.5, -1, 2}));
}

TEST(SyntheticWorld, DistanceIsScaledEuclidean) {
  SyntheticWorld world(2, 10.0, std::make_shared<MemoryImageStore>());
  const auto a = world.generate(vec({0, 0}));
  const auto b = world.generate(vec({3, 4}));
  EXPECT_DOUBLE_EQ(world.distance("dlib", a, b), 0.5);
  EXPECT_EQ(world.distance("dlib", a, b), world.distance("dlib", b, a));
  EXPECT_EQ(world.distance("dlib", a, a), 0.0);
  EXPECT_THROW(world.distance("dlib", a, ImageRef{"images/missing.f64"}), ProtocolError);
}

TEST(DecisionOracle, CachesUnorderedPairs) {
  auto world = std::make_shared<SyntheticWorld>(2, 10.0, std::make_shared<MemoryImageStore>());
  DecisionOracle oracle(world, "dlib");
  const auto a = world->generate(vec({0, 0}));
  const auto b = world->generate(vec({3, 4}));
  const auto first = oracle.distance(a, b);
  EXPECT_EQ(oracle.backend_calls(), 1u);
  EXPECT_EQ(oracle.distance(a, b), first);
  EXPECT_EQ(oracle.distance(b, a), first);
  EXPECT_EQ(oracle.backend_calls(), 1u);
  EXPECT_EQ(*first, 0.5);
}

TEST(DecisionOracle, ModelFailureIsMissingNotZero) {
  auto backend = std::make_shared<CountingBackend>();
  DecisionOracle oracle(backend, "dlib");
  EXPECT_EQ(oracle.distance({"images/noface"}, {"images/x"}), std::nullopt);
  EXPECT_EQ(oracle.distance({"images/x"}, {"images/noface"}), std::nullopt);
  EXPECT_EQ(backend->calls, 1);
  EXPECT_TRUE(oracle.distance({"images/x"}, {"images/y"}).has_value());
}

TEST(DecisionOracle, DefaultThresholds) {
  EXPECT_EQ(default_threshold("dlib"), 0.6);
  EXPECT_EQ(default_threshold("vggface"), 0.86);
  EXPECT_EQ(default_threshold("facenet512"), 1.04);
  EXPECT_EQ(default_threshold("openface"), 0.55);
  EXPECT_EQ(default_threshold("lpips"), std::nullopt);
}

TEST(DecisionOracle, AcceptanceIsStrict) {
  DecisionOracle dlib(std::make_shared<CountingBackend>(), "dlib", default_threshold("dlib"));
  EXPECT_TRUE(dlib.accept(0.0));
  EXPECT_FALSE(dlib.accept(0.80));
  EXPECT_FALSE(dlib.accept(0.6));
  EXPECT_TRUE(dlib.accept(std::nextafter(0.6, 0.0)));
  EXPECT_THROW(dlib.accept(-0.1), ValidationError);
  DecisionOracle lpips(std::make_shared<CountingBackend>(), "lpips");
  EXPECT_THROW(lpips.accept(0.1), ValidationError);
}

TEST(Protocol, RequestRoundTrip) {
  SeededRng rng(3, "proto");
  for (int trial = 0; trial < 200; ++trial) {
    const auto id = rng();
    protocol::Request req;
    if (trial % 2 == 0) {
      auto v = random_latent(rng, 1 + static_cast<Eigen::Index>(rng.below(40)));
      v[0] = std::ldexp(rng.uniform(), -1000 + static_cast<int>(rng.below(2000)));
      req = protocol::GenerateRequest{id, v};
    } else {
      req = protocol::DistanceRequest{id, "model-" + std::to_string(trial), {"images/a" + std::to_string(trial)},
                                      {"images/b.png"}};
    }
    const auto line = protocol::encode(req);
    EXPECT_EQ(line.find('\n'), std::string::npos);
    const auto back = protocol::decode_request(line);
    EXPECT_EQ(protocol::request_id(back), id);
    EXPECT_EQ(protocol::encode(back), line);
    if (const auto* g = std::get_if<protocol::GenerateRequest>(&req)) {
      EXPECT_EQ(std::get<protocol::GenerateRequest>(back).latent, g->latent);
    }
  }
}

TEST(Protocol, ResponseRoundTrip) {
  const std::vector<protocol::Response> responses{
      {1, protocol::ImageReply{{"images/abc.f64"}}},
      {2, protocol::DistanceReply{0.1 + 0.2}},
      {3, protocol::ErrorReply{"no_face", "no face found in \"a\"\n"}},
      {std::numeric_limits<std::uint64_t>::max(), protocol::DistanceReply{0.0}},
  };
  for (const auto& r : responses) {
    const auto line = protocol::encode(r);
    const auto back = protocol::decode_response(line);
    EXPECT_EQ(back.id, r.id);
    EXPECT_EQ(protocol::encode(back), line);
  }
  EXPECT_EQ(std::get<protocol::DistanceReply>(protocol::decode_response(protocol::encode(responses[1])).body).distance,
            0.1 + 0.2);
}

TEST(Protocol, WireShape) {
  const auto line = protocol::encode(protocol::Request{protocol::DistanceRequest{7, "dlib", {"a"}, {"b"}}});
  EXPECT_EQ(nlohmann::json::parse(line),
            nlohmann::json::parse(R"({"id":7,"op":"distance","model":"dlib","a":"a","b":"b"})"));
  const auto ok = protocol::decode_response(R"({"id": 1, "ok": {"image": "images/x.png"}})");
  EXPECT_EQ(std::get<protocol::ImageReply>(ok.body).image.path, "images/x.png");
  const auto err = protocol::decode_response(R"({"id": 2, "err": {"code": "no_face", "message": "m"}})");
  EXPECT_EQ(std::get<protocol::ErrorReply>(err.body).code, "no_face");
}

TEST(Protocol, MalformedInput) {
  for (const char* bad : {"", "{", "[]", R"({"id":1})", R"({"id":1,"op":"warp"})", R"({"id":-1,"op":"generate","latent":[1]})",
                          R"({"id":1,"op":"generate","latent":["x"]})", R"({"id":1,"op":"distance","model":"m","a":"x"})"}) {
    EXPECT_THROW(protocol::decode_request(bad), ProtocolError) << bad;
  }
  EXPECT_THROW(protocol::decode_response(R"({"id":1})"), ProtocolError);
  EXPECT_THROW(protocol::decode_response(R"({"id":1,"ok":{"image":"a"},"err":{"code":"x","message":"y"}})"),
               ProtocolError);
}

TEST(Protocol, ServeStreamAnswersEveryLine) {
  SyntheticWorld world(2, 10.0, std::make_shared<MemoryImageStore>());
  std::istringstream in(R"({"id":1,"op":"generate","latent":[0,0]}
{"id":2,"op":"generate","latent":[3,4]}
not json
{"id":3,"op":"generate","latent":[1,2,3]}
)");
  std::ostringstream out;
  protocol::serve_stream(in, out, &world, &world);
  std::istringstream lines(out.str());
  std::vector<protocol::Response> replies;
  for (std::string line; std::getline(lines, line);) replies.push_back(protocol::decode_response(line));
  ASSERT_EQ(replies.size(), 4u);
  EXPECT_EQ(replies[0].id, 1u);
  EXPECT_TRUE(std::holds_alternative<protocol::ImageReply>(replies[1].body));
  EXPECT_EQ(replies[2].id, 0u);
  EXPECT_EQ(std::get<protocol::ErrorReply>(replies[2].body).code, "bad_request");
  EXPECT_EQ(std::get<protocol::ErrorReply>(replies[3].body).code, "dimension");
}

TEST(RemoteOracle, HttpTransportMatchesInProcessWorld) {
  auto store = std::make_shared<MemoryImageStore>();
  SyntheticWorld world(2, 10.0, store);
  OracleHttpServer server(&world, &world);
  const int port = server.start("127.0.0.1", 0);
  auto remote = std::make_shared<RemoteOracle>(make_transport("http://127.0.0.1:" + std::to_string(port)), 2);
  const auto a = remote->generate(vec({0, 0}));
  const auto b = remote->generate(vec({3, 4}));
  EXPECT_EQ(a, world.generate(vec({0, 0})));
  DecisionOracle dlib(remote, "dlib", 0.6);
  EXPECT_DOUBLE_EQ(*dlib.distance(a, b), 0.5);
  EXPECT_EQ(dlib.distance(a, {"images/missing.f64"}), std::nullopt);
  EXPECT_THROW(remote->generate(vec({1, 2, 3})), DimensionError);
  EXPECT_EQ(remote->requests_sent(), 4u);
  server.stop();
  EXPECT_THROW(remote->generate(vec({5, 5})), TransportError);
}

TEST(RemoteOracle, SubprocessTransportExchangesLines) {
  SubprocessTransport echo("cat");
  EXPECT_EQ(echo.exchange("{\"x\":1}"), "{\"x\":1}");
  EXPECT_EQ(echo.exchange("second"), "second");
  SubprocessTransport dead("exit 0");
  EXPECT_THROW(dead.exchange("ping"), TransportError);
}

TEST(RemoteOracle, RejectsMismatchedReplyId) {
  // `cat` echoes the request back, which is not a valid response.
  RemoteOracle oracle(std::make_unique<SubprocessTransport>("cat"), 2);
  EXPECT_THROW(oracle.generate(vec({1, 2})), ProtocolError);
}

TEST(Transport, DescriptorParsing) {
  EXPECT_EQ(make_transport("http://127.0.0.1:9")->describe(), "http://127.0.0.1:9");
  EXPECT_EQ(make_transport("exec:cat")->describe(), "exec:cat");
  EXPECT_THROW(make_transport("ftp://x"), ValidationError);
}

TEST(MemoryImageStore, BoundedStoreDropsLeastRecentlyUsed) {
  MemoryImageStore store(2);
  store.put(ImageRef{"a"}, "1");
  store.put(ImageRef{"b"}, "2");
  EXPECT_EQ(store.get(ImageRef{"a"}), "1");  // b is now the oldest
  store.put(ImageRef{"c"}, "3");
  EXPECT_EQ(store.size(), 2u);
  EXPECT_TRUE(store.contains(ImageRef{"a"}));
  EXPECT_FALSE(store.contains(ImageRef{"b"}));
  EXPECT_THROW(store.get(ImageRef{"b"}), NotFoundError);
  store.put(ImageRef{"a"}, "1'");
  store.put(ImageRef{"d"}, "4");
  EXPECT_EQ(store.get(ImageRef{"a"}), "1'");
  EXPECT_FALSE(store.contains(ImageRef{"c"}));
}
