/// @file matter.cpp
