#pragma once

#include "npglab/mdp.hpp"
#include "npglab/geometry.hpp"
#include "npglab/npg.hpp"
#include "npglab/dynamics.hpp"
#include "npglab/oracle.hpp"
#include "npglab/io.hpp"
#include "npglab/config.hpp"
#include "npglab/harness.hpp"
