#include "facecloak/api.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>

#include "facecloak/rng.hpp"
#include "facecloak/serialize.hpp"
#include "facecloak/toy_world.hpp"

namespace fc = facecloak;

namespace {

struct ServerFixture : ::testing::Test {
  fc::MockVerifyServer server{42, "test-key"};
  fc::ToyWorld world = fc::make_toy_world(42);
  fc::FaceImage a = fc::sample_face(world, 1).image;
  fc::FaceImage b = fc::sample_face(world, 2).image;

  void SetUp() override { server.start(); }
};

TEST(Base64, MatchesPublishedVectors) {
  auto enc = [](const std::string& s) {
    return fc::detail::base64_encode(std::vector<uint8_t>(s.begin(), s.end()));
  };
  EXPECT_EQ(enc(""), "");
  EXPECT_EQ(enc("f"), "Zg==");
  EXPECT_EQ(enc("fo"), "Zm8=");
  EXPECT_EQ(enc("foo"), "Zm9v");
  EXPECT_EQ(enc("foob"), "Zm9vYg==");
  EXPECT_EQ(enc("fooba"), "Zm9vYmE=");
  EXPECT_EQ(enc("foobar"), "Zm9vYmFy");
}

TEST(Base64, RoundTripsArbitraryBytes) {
  fc::Rng rng(99);
  for (size_t len = 0; len <= 50; ++len) {
    std::vector<uint8_t> bytes(len);
    for (auto& v : bytes) v = static_cast<uint8_t>(rng.next_u64() & 0xff);
    EXPECT_EQ(fc::detail::base64_decode(fc::detail::base64_encode(bytes)), bytes);
  }
}

TEST(Base64, RejectsForeignCharacters) {
  EXPECT_THROW(fc::detail::base64_decode("Zm9v!a=="), fc::Error);
}

TEST_F(ServerFixture, ConfidenceMatchesServerSideRule) {
  fc::VerifyApiClient client(server.endpoint(), "test-key", 1, 1);
  const auto r = client.verify(a, b);
  // PNG transport is lossless after quantization, so the score must land on
  // the reference computed from the quantized images exactly.
  const double want = server.reference_confidence(fc::decode_image(fc::encode_png(a)),
                                                  fc::decode_image(fc::encode_png(b)));
  EXPECT_DOUBLE_EQ(r.confidence, want);
  EXPECT_EQ(r.provider, "mock");
  EXPECT_GE(r.latency_ms, 0.0);
  EXPECT_GE(r.confidence, 0.0);
  EXPECT_LE(r.confidence, 100.0);
}

TEST_F(ServerFixture, SameImageScoresFullConfidence) {
  fc::VerifyApiClient client(server.endpoint(), "test-key", 1, 1);
  const auto r = client.verify(a, a);
  EXPECT_NEAR(r.confidence, 100.0, 1e-9);
}

TEST_F(ServerFixture, BadKeyFailsWithoutRetry) {
  fc::VerifyApiClient client(server.endpoint(), "wrong-key", 3, 1);
  try {
    client.verify(a, b);
    FAIL() << "expected an auth error";
  } catch (const fc::Error& e) {
    EXPECT_EQ(e.code(), fc::Errc::auth_error);
  }
  EXPECT_EQ(server.requests_seen(), 1);
}

TEST_F(ServerFixture, TransientRateLimitIsRetried) {
  server.fail_next(2, 429);
  fc::VerifyApiClient client(server.endpoint(), "test-key", 3, 1);
  EXPECT_NO_THROW(client.verify(a, b));
  EXPECT_EQ(server.requests_seen(), 3);
}

TEST_F(ServerFixture, PersistentRateLimitSurfacesAfterRetries) {
  server.fail_next(10, 429);
  fc::VerifyApiClient client(server.endpoint(), "test-key", 3, 1);
  try {
    client.verify(a, b);
    FAIL() << "expected a rate limit error";
  } catch (const fc::Error& e) {
    EXPECT_EQ(e.code(), fc::Errc::rate_limited);
  }
  EXPECT_EQ(server.requests_seen(), 3);
}

TEST_F(ServerFixture, ServerErrorsAreRetried) {
  server.fail_next(1, 503);
  fc::VerifyApiClient client(server.endpoint(), "test-key", 2, 1);
  EXPECT_NO_THROW(client.verify(a, b));
  EXPECT_EQ(server.requests_seen(), 2);
}

TEST_F(ServerFixture, UnexpectedStatusIsNotRetried) {
  server.fail_next(5, 418);
  fc::VerifyApiClient client(server.endpoint(), "test-key", 3, 1);
  try {
    client.verify(a, b);
    FAIL() << "expected an io error";
  } catch (const fc::Error& e) {
    EXPECT_EQ(e.code(), fc::Errc::io_error);
  }
  EXPECT_EQ(server.requests_seen(), 1);
}

TEST(ApiClient, UnreachableEndpointTimesOut) {
  const fc::ToyWorld world = fc::make_toy_world(42);
  const fc::FaceImage a = fc::sample_face(world, 1).image;
  // grab a loopback port, then close it so connections are refused
  int port;
  {
    fc::MockVerifyServer scout;
    port = scout.start();
  }
  fc::VerifyApiClient client("http://127.0.0.1:" + std::to_string(port), "k", 2, 1);
  try {
    client.verify(a, a);
    FAIL() << "expected a transport error";
  } catch (const fc::Error& e) {
    EXPECT_EQ(e.code(), fc::Errc::timeout);
  }
}

TEST(ApiClient, OutOfRangeConfidenceIsRejected) {
  httplib::Server rogue;
  rogue.Post("/verify", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"confidence\": 250.0, \"provider\": \"rogue\"}", "application/json");
  });
  const int port = rogue.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread t([&] { rogue.listen_after_bind(); });
  rogue.wait_until_ready();

  const fc::ToyWorld world = fc::make_toy_world(42);
  const fc::FaceImage a = fc::sample_face(world, 1).image;
  fc::VerifyApiClient client("http://127.0.0.1:" + std::to_string(port), "k", 1, 1);
  try {
    client.verify(a, a);
    ADD_FAILURE() << "expected an io error";
  } catch (const fc::Error& e) {
    EXPECT_EQ(e.code(), fc::Errc::io_error);
  }
  rogue.stop();
  t.join();
}

TEST(Credentials, FileParsingSkipsCommentsAndPadding) {
  const auto dir = std::filesystem::path(::testing::TempDir()) / "facecloak-creds";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "key.txt").string();
  fc::write_file(path, "# provider key\n\nsecret-token \r\n");
  EXPECT_EQ(fc::read_api_key(path), "secret-token");

  fc::write_file(path, "# nothing but comments\n");
  EXPECT_THROW(fc::read_api_key(path), fc::Error);
  EXPECT_THROW(fc::read_api_key((dir / "missing.txt").string()), fc::Error);
}

TEST(Credentials, EnvironmentVariablePointsAtTheFile) {
  const auto dir = std::filesystem::path(::testing::TempDir()) / "facecloak-creds-env";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "key.txt").string();
  fc::write_file(path, "from-env\n");

  ::setenv("FACECLOAK_API_CREDENTIALS", path.c_str(), 1);
  EXPECT_EQ(fc::read_api_key_from_env(), "from-env");
  ::unsetenv("FACECLOAK_API_CREDENTIALS");
  EXPECT_THROW(fc::read_api_key_from_env(), fc::Error);
}

}  // namespace
