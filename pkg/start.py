#!/usr/bin/env python3
"""
Startup script for the PrefixForge Webservice
"""

import asyncio
import os
import sys

import uvicorn

from app.main import app

PORT = int(os.environ.get("PORT", "8080"))


async def main():
    """Main startup function."""
    print("🚀 Starting PrefixForge Webservice")
    print(f"📡 API will be available at http://localhost:{PORT}")
    print(f"📚 Documentation at http://localhost:{PORT}/docs")
    print("=" * 50)

    try:
        config = uvicorn.Config(
            app,
            host="0.0.0.0",
            port=PORT,
            log_level=os.environ.get("LOGLEVEL", "info").lower(),
            access_log=True
        )
        server = uvicorn.Server(config)
        await server.serve()
    except KeyboardInterrupt:
        print("\n🛑 Shutting down PrefixForge Webservice")
        sys.exit(0)
    except Exception as e:
        print(f"❌ Error starting server: {e}")
        sys.exit(1)


if __name__ == "__main__":
    asyncio.run(main())
