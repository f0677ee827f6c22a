#include <gtest/gtest.h>

#include "stochred/units.hpp"

using namespace stochred::units;

TEST(Units, ParseSimpleQuantities) {
  EXPECT_DOUBLE_EQ(parse_quantity("8.6e-6eV").in(kEnergy), 8.6e-6);
  EXPECT_DOUBLE_EQ(parse_quantity("1eV").in(kEnergy), 1.0);
  EXPECT_DOUBLE_EQ(parse_quantity("2.8MeV").in(kEnergy), 2.8e6);
  EXPECT_DOUBLE_EQ(parse_quantity("75 keV").in(kEnergy), 7.5e4);
  EXPECT_DOUBLE_EQ(parse_quantity("3min").in(kTime), 180.0);
  EXPECT_DOUBLE_EQ(parse_quantity("298K").in(kTemperature), 298.0);
  EXPECT_DOUBLE_EQ(parse_quantity("2.5").in(kDimensionless), 2.5);
}

TEST(Units, CompoundUnits) {
  EXPECT_DOUBLE_EQ(parse_quantity("1cm2").in(kArea), 1.0);
  EXPECT_DOUBLE_EQ(parse_quantity("1m^2").in(kArea), 1e4);
  EXPECT_DOUBLE_EQ(parse_quantity("1e10/s").in(kInverseTime), 1e10);
  EXPECT_NEAR(parse_quantity("4.18J/K").in(kHeatCapacity), 4.18 / 1.602176634e-19, 1e4);
  EXPECT_DOUBLE_EQ(parse_quantity("3e-8s*cm2").in(kTimeArea), 3e-8);
  EXPECT_DOUBLE_EQ(parse_quantity("1eV/s/cm2").in(kMassRatePerArea), 1.0);
}

TEST(Units, MassesAsRestEnergy) {
  // 1 g c^2 = 5.6096e32 eV.
  EXPECT_NEAR(parse_quantity("1g").in(kEnergy) / 5.60958860380445e32, 1.0, 1e-12);
  EXPECT_NEAR(parse_quantity("1kg").in(kEnergy) / 5.60958860380445e35, 1.0, 1e-12);
}

TEST(Units, DimensionErrors) {
  EXPECT_THROW(parse_quantity("1cm", kTime), DimensionError);
  EXPECT_THROW(parse_quantity("1eV") + parse_quantity("1s"), DimensionError);
  EXPECT_THROW(sqrt(parse_quantity("1cm")), DimensionError);
  EXPECT_THROW(parse_quantity("1furlong"), std::invalid_argument);
  EXPECT_THROW(parse_quantity("abc"), std::invalid_argument);
  EXPECT_THROW(parse_quantity("1cm/"), std::invalid_argument);
}

TEST(Units, Arithmetic) {
  const Quantity a = parse_quantity("2cm");
  const Quantity area = a * a;
  EXPECT_TRUE(area.dim() == kArea);
  EXPECT_DOUBLE_EQ(sqrt(area).in(kLength), 2.0);
  EXPECT_DOUBLE_EQ(pow(a, 3).value(), 8.0);
  EXPECT_DOUBLE_EQ(to_unit(seconds(120.0), "min"), 2.0);
  EXPECT_DOUBLE_EQ(to_unit(square_cm(1e4), "m2"), 1.0);
  EXPECT_EQ(kHeatCapacity.str(), "eV*K^-1");
}
